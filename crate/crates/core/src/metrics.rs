//! Dice score and symmetric Hausdorff distance over label maps.

use crate::error::{Error, Result};
use crate::label::LabelMap;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub class_id: usize,
    pub dice: f64,
    /// Pixel units.
    pub hausdorff: f64,
}

fn check_dims(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            left: vec![pred.height(), pred.width()],
            right: vec![gt.height(), gt.width()],
        });
    }
    Ok(())
}

/// `2|A n B| / (|A| + |B|)`; 1.0 when both masks are empty.
pub fn dice(pred: &LabelMap, gt: &LabelMap, class_id: usize) -> Result<f64> {
    check_dims(pred, gt)?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let (ip, ig) = (usize::from(p) == class_id, usize::from(g) == class_id);
        a += ip as usize;
        b += ig as usize;
        inter += (ip && ig) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Mask pixels with a 4-neighbour outside the mask or on the image border.
pub fn boundary(mask: &[bool], h: usize, w: usize) -> Vec<(usize, usize)> {
    let inside = |i: usize, j: usize| mask[i * w + j];
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if !inside(i, j) {
                continue;
            }
            let edge = i == 0
                || j == 0
                || i + 1 == h
                || j + 1 == w
                || !inside(i - 1, j)
                || !inside(i + 1, j)
                || !inside(i, j - 1)
                || !inside(i, j + 1);
            if edge {
                out.push((i, j));
            }
        }
    }
    out
}

fn directed(from: &[(usize, usize)], to: &[(usize, usize)]) -> f64 {
    let mut worst = 0.0f64;
    for &(ai, aj) in from {
        let mut best = f64::INFINITY;
        for &(bi, bj) in to {
            let di = ai as f64 - bi as f64;
            let dj = aj as f64 - bj as f64;
            best = best.min(di * di + dj * dj);
            if best <= worst {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst.sqrt()
}

/// Symmetric Hausdorff distance between the class boundaries. Both masks
/// empty gives 0; exactly one empty gives the image diagonal.
pub fn hausdorff(pred: &LabelMap, gt: &LabelMap, class_id: usize) -> Result<f64> {
    check_dims(pred, gt)?;
    let (h, w) = (gt.height(), gt.width());
    let a = boundary(&pred.mask(class_id), h, w);
    let b = boundary(&gt.mask(class_id), h, w);
    Ok(match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => ((h * h + w * w) as f64).sqrt(),
        _ => directed(&a, &b).max(directed(&b, &a)),
    })
}

/// Metrics for every foreground class `1..classes`.
pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<MetricsRow>> {
    if pred.classes() != gt.classes() {
        return Err(Error::invalid(format!(
            "class count mismatch: prediction has {}, ground truth {}",
            pred.classes(),
            gt.classes()
        )));
    }
    (1..gt.classes())
        .map(|c| {
            Ok(MetricsRow {
                class_id: c,
                dice: dice(pred, gt, c)?,
                hausdorff: hausdorff(pred, gt, c)?,
            })
        })
        .collect()
}

/// Mean Dice and mean Hausdorff over the foreground rows (class 0 is
/// skipped).
pub fn mean_seg(rows: &[MetricsRow]) -> Result<(f64, f64)> {
    let fg: Vec<&MetricsRow> = rows.iter().filter(|r| r.class_id != 0).collect();
    if fg.is_empty() {
        return Err(Error::invalid("mean_seg over an empty row set"));
    }
    let n = fg.len() as f64;
    Ok((
        fg.iter().map(|r| r.dice).sum::<f64>() / n,
        fg.iter().map(|r| r.hausdorff).sum::<f64>() / n,
    ))
}

/// Per-sample rows followed by a per-class mean row and a `mean_seg` row.
pub fn metrics_csv(per_sample: &[(usize, Vec<MetricsRow>)]) -> Result<String> {
    let mut out = String::from("sample_id,class_id,dice,hausdorff\n");
    let mut by_class: std::collections::BTreeMap<usize, Vec<&MetricsRow>> = Default::default();
    for (id, rows) in per_sample {
        for r in rows {
            out.push_str(&format!("{id},{},{},{}\n", r.class_id, r.dice, r.hausdorff));
            by_class.entry(r.class_id).or_default().push(r);
        }
    }
    let mut means = Vec::new();
    for (class_id, rows) in by_class {
        let n = rows.len() as f64;
        let row = MetricsRow {
            class_id,
            dice: rows.iter().map(|r| r.dice).sum::<f64>() / n,
            hausdorff: rows.iter().map(|r| r.hausdorff).sum::<f64>() / n,
        };
        out.push_str(&format!("mean,{},{},{}\n", row.class_id, row.dice, row.hausdorff));
        means.push(row);
    }
    let (d, h) = mean_seg(&means)?;
    out.push_str(&format!("mean,mean_seg,{d},{h}\n"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, cells: &[(usize, usize)]) -> LabelMap {
        let mut m = LabelMap::filled(h, w, 2, 0).unwrap();
        for &(i, j) in cells {
            m.set(i, j, 1);
        }
        m
    }

    #[test]
    fn dice_point_cases() {
        let a = map(4, 4, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        let b = map(4, 4, &[(2, 2), (2, 3), (3, 2), (3, 3)]);
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.0);
        let c = map(4, 4, &[(0, 0), (0, 1), (2, 0), (2, 1)]);
        assert_eq!(dice(&a, &c, 1).unwrap(), 0.5);
        let empty = map(4, 4, &[]);
        assert_eq!(dice(&empty, &empty, 1).unwrap(), 1.0);
        assert!(dice(&a, &map(3, 4, &[]), 1).is_err());
    }

    #[test]
    fn hausdorff_point_cases() {
        let a = map(5, 5, &[(0, 0)]);
        let b = map(5, 5, &[(3, 4)]);
        assert_eq!(hausdorff(&a, &b, 1).unwrap(), 5.0);
        assert_eq!(hausdorff(&a, &a, 1).unwrap(), 0.0);
        let empty = map(5, 5, &[]);
        assert_eq!(hausdorff(&empty, &empty, 1).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &empty, 1).unwrap(), 50f64.sqrt());
    }

    #[test]
    fn interior_pixels_are_not_boundary() {
        let mask = vec![true; 9];
        assert_eq!(boundary(&mask, 3, 3).len(), 8);
        let mut mask = vec![false; 25];
        for i in 1..4 {
            for j in 1..4 {
                mask[i * 5 + j] = true;
            }
        }
        let b = boundary(&mask, 5, 5);
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&(2, 2)));
    }

    #[test]
    fn mean_seg_cases() {
        let row = |c, d, h| MetricsRow {
            class_id: c,
            dice: d,
            hausdorff: h,
        };
        assert_eq!(mean_seg(&[row(1, 0.7, 2.0)]).unwrap(), (0.7, 2.0));
        let (d, h) = mean_seg(&[row(1, 0.8, 1.0), row(2, 0.9, 2.0), row(3, 1.0, 6.0), row(0, 0.0, 99.0)]).unwrap();
        assert!((d - 0.9).abs() < 1e-15);
        assert_eq!(h, 3.0);
        assert!(mean_seg(&[]).is_err());
        assert!(mean_seg(&[row(0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn csv_has_summary_rows() {
        let gt = LabelMap::new(2, 2, 3, vec![0, 1, 2, 2]).unwrap();
        let rows = evaluate(&gt, &gt).unwrap();
        let csv = metrics_csv(&[(0, rows.clone()), (1, rows)]).unwrap();
        assert!(csv.starts_with("sample_id,class_id,dice,hausdorff\n0,1,1,0\n"));
        assert!(csv.ends_with("mean,mean_seg,1,0\n"));
    }
}
