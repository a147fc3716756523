use featfilter::synthdata::{generate, read_dataset, split, write_dataset, Dataset, SceneConfig, LV, MYO, RV};

/// Pixel fractions of background, RV, MYO and LV over 100 default samples
/// (seed 0), recorded from a reference execution.
const GOLDEN_FRACTIONS: [f64; 4] = [0.88223876953125, 0.04573974609375, 0.03890625, 0.033115234375];
const BAND: f64 = 0.002;

#[test]
fn class_fractions_stay_in_golden_band() {
    let samples = generate(&SceneConfig::default(), 100, 0).unwrap();
    let mut counts = [0usize; 4];
    for s in &samples {
        for (c, n) in counts.iter_mut().enumerate() {
            *n += s.label.count(c);
        }
    }
    let total: usize = counts.iter().sum();
    assert_eq!(total, 100 * 64 * 64);
    for (c, &n) in counts.iter().enumerate() {
        let frac = n as f64 / total as f64;
        assert!((frac - GOLDEN_FRACTIONS[c]).abs() <= BAND, "class {c}: {frac}");
    }
}

#[test]
fn every_sample_keeps_class_structure() {
    for s in generate(&SceneConfig::default(), 100, 3).unwrap() {
        let (h, w) = (s.label.height(), s.label.width());
        for c in [RV, MYO, LV] {
            assert!(s.label.count(c as usize) > 0, "sample {} lacks class {c}", s.id);
        }
        // LV never touches background or RV directly: it sits inside the ring
        for i in 0..h {
            for j in 0..w {
                if s.label.get(i, j) != LV {
                    continue;
                }
                for (di, dj) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    assert!(ni >= 0 && nj >= 0 && (ni as usize) < h && (nj as usize) < w);
                    let n = s.label.get(ni as usize, nj as usize);
                    assert!(n == LV || n == MYO, "sample {}: LV next to class {n}", s.id);
                }
            }
        }
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = generate(&SceneConfig::default(), 10, 5).unwrap();
    let (train, validation) = split(&samples, 0.8, 5).unwrap();
    let data = Dataset { train, validation };
    write_dataset(dir.path(), &data).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.train.len(), 8);
    assert_eq!(back.validation.len(), 2);
    for (a, b) in data.train.iter().chain(&data.validation).zip(back.train.iter().chain(&back.validation)) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.image, b.image);
    }
}

#[test]
fn missing_manifest_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("manifest.txt"), "{err}");
}
