//! Deterministic cardiac-like segmentation scenes.
//!
//! Each sample is a short-axis-like slice: a bright left-ventricle disk
//! (LV), a dark myocardium ring around it (MYO), and a right-ventricle
//! crescent (RV) hugging the ring's left side, on a noisy background with a
//! few confuser blobs that share the myocardium's intensity. Geometry is
//! rasterized with integer centers and radii; noise comes from a per-sample
//! stream derived from `(seed, id)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const BACKGROUND: u8 = 0;
pub const RV: u8 = 1;
pub const MYO: u8 = 2;
pub const LV: u8 = 3;
pub const NUM_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub image_size: usize,
    pub num_classes: usize,
    /// Inclusive integer ranges, in pixels.
    pub lv_radius: (i64, i64),
    pub myo_thickness: (i64, i64),
    /// RV center distance beyond the outer myocardium radius.
    pub rv_offset: (i64, i64),
    /// RV radius relative to the outer myocardium radius.
    pub rv_radius_delta: (i64, i64),
    pub rv_vertical_jitter: i64,
    pub center_jitter: i64,
    pub confuser_radius: (i64, i64),
    pub confuser_blobs: usize,
    /// Mean intensity per class: background, RV, MYO, LV.
    pub intensity: [f64; 4],
    pub noise_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            num_classes: NUM_CLASSES,
            lv_radius: (5, 8),
            myo_thickness: (2, 4),
            rv_offset: (0, 3),
            rv_radius_delta: (-2, 1),
            rv_vertical_jitter: 2,
            center_jitter: 3,
            confuser_radius: (2, 4),
            confuser_blobs: 2,
            intensity: [0.15, 0.75, 0.35, 0.85],
            noise_sigma: 0.08,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.image_size;
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("image_size {n} must be a power of two")));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::invalid(format!("scenes have exactly {NUM_CLASSES} classes")));
        }
        for (name, (lo, hi)) in [
            ("lv_radius", self.lv_radius),
            ("myo_thickness", self.myo_thickness),
            ("rv_offset", self.rv_offset),
            ("rv_radius_delta", self.rv_radius_delta),
            ("confuser_radius", self.confuser_radius),
        ] {
            if lo > hi {
                return Err(Error::invalid(format!("{name}: empty range {lo}..={hi}")));
            }
        }
        if self.lv_radius.0 < 1 || self.myo_thickness.0 < 1 || self.confuser_radius.0 < 1 {
            return Err(Error::invalid("radii and thickness must be at least 1"));
        }
        if self.center_jitter < 0 || self.rv_vertical_jitter < 0 || self.rv_offset.0 < 0 {
            return Err(Error::invalid("jitters and offsets must be non-negative"));
        }
        let rv_min = self.lv_radius.0 + self.myo_thickness.0 + self.rv_radius_delta.0;
        if rv_min < 1 {
            return Err(Error::invalid("rv radius can fall below 1"));
        }
        if !(self.noise_sigma >= 0.0) || self.intensity.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("intensities must lie in [0, 1] and noise_sigma be >= 0"));
        }
        // worst-case extents must stay one pixel inside the frame
        let r_myo = self.lv_radius.1 + self.myo_thickness.1;
        let r_rv = r_myo + self.rv_radius_delta.1;
        let half = (n / 2) as i64;
        let left = half - self.center_jitter - (r_myo + self.rv_offset.1) - r_rv;
        let right = half + self.center_jitter + r_myo;
        let vertical = half + self.center_jitter + r_myo.max(r_rv + self.rv_vertical_jitter);
        if left < 1 || right > n as i64 - 2 || vertical > n as i64 - 2 {
            return Err(Error::invalid(format!(
                "geometry does not fit a {n}x{n} image (left edge {left}, right edge {right}, vertical edge {vertical})"
            )));
        }
        Ok(())
    }

    /// `key = value` lines under the `scene.` prefix. Ranges are written
    /// as `lo,hi`.
    pub fn to_text(&self) -> String {
        let pair = |(a, b): (i64, i64)| format!("{a},{b}");
        let intensity: Vec<String> = self.intensity.iter().map(f64::to_string).collect();
        format!(
            "scene.image_size = {}\nscene.num_classes = {}\nscene.lv_radius = {}\nscene.myo_thickness = {}\nscene.rv_offset = {}\nscene.rv_radius_delta = {}\nscene.rv_vertical_jitter = {}\nscene.center_jitter = {}\nscene.confuser_radius = {}\nscene.confuser_blobs = {}\nscene.intensity = {}\nscene.noise_sigma = {}\n",
            self.image_size,
            self.num_classes,
            pair(self.lv_radius),
            pair(self.myo_thickness),
            pair(self.rv_offset),
            pair(self.rv_radius_delta),
            self.rv_vertical_jitter,
            self.center_jitter,
            pair(self.confuser_radius),
            self.confuser_blobs,
            intensity.join(","),
            self.noise_sigma
        )
    }

    /// Applies one `scene.*` setting. Returns `false` for other keys.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.trim().parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn pair(key: &str, v: &str) -> std::result::Result<(i64, i64), String> {
            let (a, b) = v.split_once(',').ok_or_else(|| format!("{key}: expected lo,hi, got {v:?}"))?;
            Ok((num(key, a)?, num(key, b)?))
        }
        match key {
            "scene.image_size" => self.image_size = num(key, value)?,
            "scene.num_classes" => self.num_classes = num(key, value)?,
            "scene.lv_radius" => self.lv_radius = pair(key, value)?,
            "scene.myo_thickness" => self.myo_thickness = pair(key, value)?,
            "scene.rv_offset" => self.rv_offset = pair(key, value)?,
            "scene.rv_radius_delta" => self.rv_radius_delta = pair(key, value)?,
            "scene.rv_vertical_jitter" => self.rv_vertical_jitter = num(key, value)?,
            "scene.center_jitter" => self.center_jitter = num(key, value)?,
            "scene.confuser_radius" => self.confuser_radius = pair(key, value)?,
            "scene.confuser_blobs" => self.confuser_blobs = num(key, value)?,
            "scene.intensity" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 4 {
                    return Err(format!("{key}: expected four comma-separated values"));
                }
                for (slot, p) in self.intensity.iter_mut().zip(parts) {
                    *slot = num(key, p)?;
                }
            }
            "scene.noise_sigma" => self.noise_sigma = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    /// `H x W x 1`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: LabelMap,
}

struct Disk {
    ci: i64,
    cj: i64,
    r: i64,
}

impl Disk {
    fn contains(&self, i: i64, j: i64) -> bool {
        let (di, dj) = (i - self.ci, j - self.cj);
        di * di + dj * dj <= self.r * self.r
    }

    fn clear_of(&self, other: &Disk, margin: i64) -> bool {
        let (di, dj) = (self.ci - other.ci, self.cj - other.cj);
        let reach = self.r + other.r + margin;
        di * di + dj * dj > reach * reach
    }
}

fn sample_one(config: &SceneConfig, seed: u64, id: usize) -> Sample {
    let n = config.image_size as i64;
    let mut rng = Rng::stream(seed, id as u64);
    let half = n / 2;
    let ci = half + rng.int_range(-config.center_jitter, config.center_jitter);
    let cj = half + rng.int_range(-config.center_jitter, config.center_jitter);
    let r_lv = rng.int_range(config.lv_radius.0, config.lv_radius.1);
    let r_myo = r_lv + rng.int_range(config.myo_thickness.0, config.myo_thickness.1);
    let lv = Disk { ci, cj, r: r_lv };
    let myo = Disk { ci, cj, r: r_myo };
    let offset = r_myo + rng.int_range(config.rv_offset.0, config.rv_offset.1);
    let rv = Disk {
        ci: ci + rng.int_range(-config.rv_vertical_jitter, config.rv_vertical_jitter),
        cj: cj - offset,
        r: r_myo + rng.int_range(config.rv_radius_delta.0, config.rv_radius_delta.1),
    };

    let mut confusers = Vec::new();
    for _ in 0..config.confuser_blobs {
        for _attempt in 0..50 {
            let r = rng.int_range(config.confuser_radius.0, config.confuser_radius.1);
            let blob = Disk {
                ci: rng.int_range(r, n - 1 - r),
                cj: rng.int_range(r, n - 1 - r),
                r,
            };
            if blob.clear_of(&myo, 2) && blob.clear_of(&rv, 2) {
                confusers.push(blob);
                break;
            }
        }
    }

    let size = config.image_size;
    let mut labels = vec![BACKGROUND; size * size];
    let mut pixels = vec![0.0; size * size];
    for i in 0..n {
        for j in 0..n {
            let class = if lv.contains(i, j) {
                LV
            } else if myo.contains(i, j) {
                MYO
            } else if rv.contains(i, j) {
                RV
            } else {
                BACKGROUND
            };
            let mean = if class == BACKGROUND && confusers.iter().any(|b| b.contains(i, j)) {
                config.intensity[usize::from(MYO)]
            } else {
                config.intensity[usize::from(class)]
            };
            let at = (i * n + j) as usize;
            labels[at] = class;
            pixels[at] = mean;
        }
    }
    if config.noise_sigma > 0.0 {
        for p in &mut pixels {
            *p = (*p + config.noise_sigma * rng.normal()).clamp(0.0, 1.0);
        }
    }
    Sample {
        id,
        image: Tensor::new(vec![size, size, 1], pixels).expect("image dims"),
        label: LabelMap::new(size, size, NUM_CLASSES, labels).expect("label values"),
    }
}

/// `count` samples with ids `0..count`, each from its own stream.
pub fn generate(config: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Sample>> {
    config.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok((0..count).map(|id| sample_one(config, seed, id)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augment {
    /// Nearest-neighbour rotation about the image center.
    Rotate { degrees: f64 },
    /// Integer shift, rows then columns; vacated pixels become background.
    Translate { dy: i64, dx: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    Rotate,
    Translate,
}

impl std::fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rotate => "rotate",
            Self::Translate => "translate",
        })
    }
}

impl std::str::FromStr for AugmentMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rotate" => Ok(Self::Rotate),
            "translate" => Ok(Self::Translate),
            _ => Err(format!("unknown augmentation {s:?} (expected rotate|translate)")),
        }
    }
}

/// Applies one spatial transform jointly to image and label. Pixels mapped
/// from outside the frame get intensity 0 and the background class.
pub fn augment(sample: &Sample, aug: Augment) -> Sample {
    let h = sample.label.height();
    let w = sample.label.width();
    let source = |i: usize, j: usize| -> Option<(usize, usize)> {
        let (si, sj) = match aug {
            Augment::Rotate { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                let (oi, oj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
                let (y, x) = (i as f64 - oi, j as f64 - oj);
                // inverse map: rotate the destination back by -theta
                ((oi + c * y + s * x).round() as i64, (oj - s * y + c * x).round() as i64)
            }
            Augment::Translate { dy, dx } => (i as i64 - dy, j as i64 - dx),
        };
        ((0..h as i64).contains(&si) && (0..w as i64).contains(&sj)).then_some((si as usize, sj as usize))
    };
    let mut image = Tensor::zeros(&[h, w, 1]);
    let mut label = LabelMap::filled(h, w, sample.label.classes(), BACKGROUND).expect("label dims");
    for i in 0..h {
        for j in 0..w {
            if let Some((si, sj)) = source(i, j) {
                image.data_mut()[i * w + j] = sample.image.data()[si * w + sj];
                label.set(i, j, sample.label.get(si, sj));
            }
        }
    }
    Sample {
        id: sample.id,
        image,
        label,
    }
}

/// Draws transform parameters from `seed`: rotations in +-15 degrees,
/// shifts in +-4 pixels.
pub fn random_augment(sample: &Sample, mode: AugmentMode, seed: u64) -> Sample {
    let mut rng = Rng::stream(seed, sample.id as u64);
    let aug = match mode {
        AugmentMode::Rotate => Augment::Rotate {
            degrees: rng.uniform_range(-15.0, 15.0),
        },
        AugmentMode::Translate => Augment::Translate {
            dy: rng.int_range(-4, 4),
            dx: rng.int_range(-4, 4),
        },
    };
    augment(sample, aug)
}

/// Zero-mean, unit-variance copy of an image (all zeros if constant).
pub fn normalize_image(image: &Tensor) -> Tensor {
    let n = image.len() as f64;
    let mean = image.sum() / n;
    let var = image.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Tensor::zeros(image.dims());
    }
    let inv = 1.0 / var.sqrt();
    image.map(|v| (v - mean) * inv)
}

/// Deterministic shuffle into `(train, validation)`; the train share is
/// `round(train_fraction * n)` and both parts must be non-empty.
pub fn split(samples: &[Sample], train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train_fraction {train_fraction} must lie in (0, 1)")));
    }
    let n_train = (train_fraction * samples.len() as f64).round() as usize;
    if n_train == 0 || n_train >= samples.len() {
        return Err(Error::invalid(format!(
            "split of {} samples at {train_fraction} leaves an empty part",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    Rng::named(seed, "split").shuffle(&mut order);
    let (a, b) = order.split_at(n_train);
    let mut train: Vec<usize> = a.to_vec();
    let mut val: Vec<usize> = b.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((
        train.into_iter().map(|k| samples[k].clone()).collect(),
        val.into_iter().map(|k| samples[k].clone()).collect(),
    ))
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

pub const MANIFEST: &str = "manifest.txt";

/// Writes images as FSM1, labels as PGM, and `manifest.txt` lines
/// `id,image_path,label_path,split` with paths relative to `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut all: Vec<(&Sample, &str)> = data
        .train
        .iter()
        .map(|s| (s, "train"))
        .chain(data.validation.iter().map(|s| (s, "val")))
        .collect();
    all.sort_by_key(|(s, _)| s.id);
    let mut manifest = String::new();
    for (s, part) in all {
        let image = format!("images/{:06}.fsm", s.id);
        let label = format!("labels/{:06}.pgm", s.id);
        s.image.save(&dir.join(&image))?;
        s.label.save_pgm(&dir.join(&label))?;
        let _ = writeln!(manifest, "{},{image},{label},{part}", s.id);
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path: PathBuf = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |reason: String| Error::Format {
        kind: "manifest",
        path: path.clone(),
        reason,
    };
    let mut data = Dataset::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let [id, image, label, part] = parts[..] else {
            return Err(bad(format!("malformed line {line:?}")));
        };
        let id = id.parse().map_err(|_| bad(format!("bad id {id:?}")))?;
        let sample = Sample {
            id,
            image: Tensor::load(&dir.join(image))?,
            label: LabelMap::load_pgm(&dir.join(label))?,
        };
        match part {
            "train" => data.train.push(sample),
            "val" => data.validation.push(sample),
            _ => return Err(bad(format!("unknown split {part:?}"))),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid(label: &LabelMap, class: u8) -> (f64, f64) {
        let (mut si, mut sj, mut n) = (0.0, 0.0, 0.0);
        for i in 0..label.height() {
            for j in 0..label.width() {
                if label.get(i, j) == class {
                    si += i as f64;
                    sj += j as f64;
                    n += 1.0;
                }
            }
        }
        (si / n, sj / n)
    }

    #[test]
    fn noiseless_image_is_piecewise_constant() {
        let config = SceneConfig {
            noise_sigma: 0.0,
            confuser_blobs: 0,
            ..SceneConfig::default()
        };
        let s = &generate(&config, 1, 5).unwrap()[0];
        for (&v, &c) in s.image.data().iter().zip(s.label.data()) {
            assert_eq!(v, config.intensity[usize::from(c)]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SceneConfig::default();
        assert_eq!(generate(&config, 3, 11).unwrap(), generate(&config, 3, 11).unwrap());
        assert_ne!(generate(&config, 1, 11).unwrap(), generate(&config, 1, 12).unwrap());
    }

    #[test]
    fn all_classes_present_and_inside_frame() {
        for s in generate(&SceneConfig::default(), 50, 3).unwrap() {
            for c in 0..4 {
                assert!(s.label.count(c) > 0, "sample {} lacks class {c}", s.id);
            }
            let n = s.label.width();
            for k in 0..n {
                for (i, j) in [(0, k), (n - 1, k), (k, 0), (k, n - 1)] {
                    assert_eq!(s.label.get(i, j), BACKGROUND);
                }
            }
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn myo_separates_lv_from_everything_else() {
        for s in generate(&SceneConfig::default(), 30, 8).unwrap() {
            let (h, w) = (s.label.height(), s.label.width());
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    if s.label.get(i, j) != LV {
                        continue;
                    }
                    for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                        assert!(matches!(s.label.get(a, b), LV | MYO));
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let config = SceneConfig {
            lv_radius: (20, 30),
            ..SceneConfig::default()
        };
        assert!(generate(&config, 1, 0).is_err());
        assert!(generate(&SceneConfig::default(), 0, 0).is_err());
        let odd = SceneConfig {
            image_size: 48,
            ..SceneConfig::default()
        };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn zero_rotation_is_identity() {
        let s = &generate(&SceneConfig::default(), 1, 2).unwrap()[0];
        assert_eq!(&augment(s, Augment::Rotate { degrees: 0.0 }), s);
    }

    #[test]
    fn translation_shifts_centroid() {
        let s = &generate(&SceneConfig::default(), 1, 2).unwrap()[0];
        let t = augment(s, Augment::Translate { dy: 2, dx: 0 });
        for class in [RV, MYO, LV] {
            let (a, b) = (centroid(&s.label, class), centroid(&t.label, class));
            assert_eq!((b.0 - a.0, b.1 - a.1), (2.0, 0.0));
        }
    }

    #[test]
    fn transforms_keep_image_and_label_registered() {
        let config = SceneConfig {
            noise_sigma: 0.0,
            confuser_blobs: 0,
            ..SceneConfig::default()
        };
        let s = &generate(&config, 1, 4).unwrap()[0];
        // label rendered as an image must move exactly like the label
        let as_image = Sample {
            image: Tensor::from_fn(&[64, 64, 1], |k| f64::from(s.label.data()[k])),
            ..s.clone()
        };
        for aug in [Augment::Rotate { degrees: 23.0 }, Augment::Translate { dy: -3, dx: 5 }] {
            let t = augment(&as_image, aug);
            for (&v, &c) in t.image.data().iter().zip(t.label.data()) {
                assert_eq!(v, f64::from(c));
            }
        }
        for mode in [AugmentMode::Rotate, AugmentMode::Translate] {
            assert_eq!(random_augment(s, mode, 1), random_augment(s, mode, 1));
        }
    }

    #[test]
    fn normalization() {
        let s = &generate(&SceneConfig::default(), 1, 2).unwrap()[0];
        let z = normalize_image(&s.image);
        let n = z.len() as f64;
        let mean = z.sum() / n;
        let std = (z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-10);
        assert!((std - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_cases() {
        let samples = generate(&SceneConfig::default(), 10, 1).unwrap();
        let (train, val) = split(&samples, 0.8, 3).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        let mut ids: Vec<usize> = train.iter().chain(&val).map(|s| s.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        let (train2, _) = split(&samples, 0.8, 3).unwrap();
        assert_eq!(train, train2);
        assert!(split(&samples, 1.0, 3).is_err());
        assert!(split(&samples[..1], 0.5, 3).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate(&SceneConfig::default(), 5, 1).unwrap();
        let (train, validation) = split(&samples, 0.6, 1).unwrap();
        let data = Dataset { train, validation };
        write_dataset(dir.path(), &data).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.train, data.train);
        assert_eq!(back.validation, data.validation);
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.lines().next().unwrap().starts_with("0,images/000000.fsm,labels/000000.pgm,"));
    }

    #[test]
    fn scene_text_round_trip() {
        let mut config = SceneConfig {
            lv_radius: (4, 7),
            intensity: [0.1, 0.2, 0.3, 0.4],
            ..SceneConfig::default()
        };
        config.noise_sigma = 0.05;
        let mut back = SceneConfig::default();
        for line in config.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(back.set(k.trim(), v.trim()).unwrap(), "{k}");
        }
        assert_eq!(back, config);
        assert!(!back.set("net.depth", "2").unwrap());
        assert!(back.set("scene.lv_radius", "4").is_err());
    }
}
