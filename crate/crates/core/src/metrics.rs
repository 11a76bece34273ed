//! Scoring of thin predicted edges against thin ground truth: F1 and IoU
//! with a radius-2 Chebyshev tolerance band, and global-statistics SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Mask;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Dilation by a `(2r+1)×(2r+1)` square, clipped at the borders.
pub fn tolerance_band(gt: &Mask, radius: usize) -> Mask {
    let (h, w) = gt.dims();
    // Separable: dilate rows, then columns.
    let mut rows = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if gt.get(y, x) {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                for xx in lo..=hi {
                    rows.set(y, xx, true);
                }
            }
        }
    }
    let mut band = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if rows.get(y, x) {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(h - 1);
                for yy in lo..=hi {
                    band.set(yy, x, true);
                }
            }
        }
    }
    band
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// `tp`: predictions inside `band`; `fp`: predictions outside it; `fn_`:
/// ground-truth pixels with no prediction within the default radius.
pub fn confusion(pred: &Mask, gt: &Mask, band: &Mask) -> Result<ConfusionCounts> {
    pred.expect_dims("confusion", gt)?;
    pred.expect_dims("confusion", band)?;
    let tp = pred.and(band).count();
    let fp = pred.count() - tp;
    let reach = tolerance_band(pred, DEFAULT_RADIUS);
    let fn_ = gt.and_not(&reach).count();
    Ok(ConfusionCounts { tp, fp, fn_ })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean; each is 0 when undefined.
pub fn f1(counts: &ConfusionCounts) -> PrecisionRecall {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall { precision, recall, f1 }
}

/// `|pred ∧ band(gt)| / |pred ∨ gt|`; 1 when both masks are empty.
pub fn iou_metric(pred: &Mask, gt: &Mask) -> Result<f64> {
    pred.expect_dims("iou_metric", gt)?;
    let union = pred.or(gt).count();
    if union == 0 {
        return Ok(1.0);
    }
    let inter = pred.and(&tolerance_band(gt, DEFAULT_RADIUS)).count();
    Ok(inter as f64 / union as f64)
}

const SSIM_L: f64 = 1.0;
const SSIM_C1: f64 = (0.01 * SSIM_L) * (0.01 * SSIM_L);
const SSIM_C2: f64 = (0.03 * SSIM_L) * (0.03 * SSIM_L);
const SSIM_C3: f64 = SSIM_C2 / 2.0;

/// Luminance · contrast · structure with one mean, deviation and covariance
/// per image (sample statistics, `n − 1` denominator).
pub fn ssim<T: Scalar>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("ssim", format!("{} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ssim needs at least two pixels".into()));
    }
    let mean = |v: &[T]| v.iter().map(|a| a.as_f64()).sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let da = a.as_f64() - mx;
        let db = b.as_f64() - my;
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    let d = (n - 1) as f64;
    let (vx, vy, cxy) = (vx / d, vy / d, cxy / d);
    let sxy = (vx * vy).sqrt();
    let l = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
    let c = (2.0 * sxy + SSIM_C2) / (vx + vy + SSIM_C2);
    let s = (cxy + SSIM_C3) / (sxy + SSIM_C3);
    Ok(l * c * s)
}

/// Scores of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub ssim: f64,
    /// Number of predicted edge pixels.
    pub positives: usize,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub ssim: f64,
    pub images: usize,
}

/// Per-image scores, their arithmetic means and the settings that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_image: Vec<ImageScore>,
    pub aggregate: Aggregate,
    pub config: serde_json::Value,
}

/// Scores a binary prediction; `soft` is the map SSIM is computed on
/// (the probability map for a network, the mask itself for baselines).
pub fn score_image<T: Scalar>(id: &str, pred: &Mask, soft: &[T], gt: &Mask) -> Result<ImageScore> {
    let band = tolerance_band(gt, DEFAULT_RADIUS);
    let counts = confusion(pred, gt, &band)?;
    let pr = f1(&counts);
    let iou = iou_metric(pred, gt)?;
    let ssim = ssim(soft, &gt.to_reals::<T>())?;
    Ok(ImageScore {
        id: id.to_string(),
        precision: pr.precision,
        recall: pr.recall,
        f1: pr.f1,
        iou,
        ssim,
        positives: pred.count(),
        counts,
    })
}

impl MetricsReport {
    pub fn new(per_image: Vec<ImageScore>, config: serde_json::Value) -> Self {
        let k = per_image.len();
        let mean = |f: fn(&ImageScore) -> f64| {
            if k == 0 {
                0.0
            } else {
                per_image.iter().map(f).sum::<f64>() / k as f64
            }
        };
        let aggregate = Aggregate {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
            iou: mean(|s| s.iou),
            ssim: mean(|s| s.ssim),
            images: k,
        };
        MetricsReport {
            per_image,
            aggregate,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Median predicted-positive count per image.
    pub fn median_positives(&self) -> f64 {
        let mut v: Vec<usize> = self.per_image.iter().map(|s| s.positives).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_unstable();
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m] as f64
        } else {
            (v[m - 1] + v[m]) as f64 / 2.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vline(h: usize, w: usize, x: usize) -> Mask {
        Mask::from_fn(h, w, |_, xx| xx == x)
    }

    #[test]
    fn band_of_single_pixel_is_five_by_five() {
        let mut gt = Mask::new(9, 9);
        gt.set(4, 4, true);
        let b = tolerance_band(&gt, 2);
        assert_eq!(b.count(), 25);
        assert!(b.iter_set().all(|(y, x)| (2..=6).contains(&y) && (2..=6).contains(&x)));
        assert!(tolerance_band(&Mask::new(5, 5), 2).is_empty());
    }

    #[test]
    fn band_of_vertical_line_is_clipped() {
        let b = tolerance_band(&vline(6, 8, 1), 2);
        assert_eq!(b, Mask::from_fn(6, 8, |_, x| x <= 3));
        let b = tolerance_band(&vline(6, 8, 4), 2);
        assert_eq!(b, Mask::from_fn(6, 8, |_, x| (2..=6).contains(&x)));
    }

    #[test]
    fn confusion_hand_cases() {
        let gt = vline(8, 8, 3);
        let band = tolerance_band(&gt, 2);
        let exact = confusion(&gt, &gt, &band).unwrap();
        assert_eq!(exact, ConfusionCounts { tp: 8, fp: 0, fn_: 0 });
        let near = confusion(&vline(8, 8, 4), &gt, &band).unwrap();
        assert_eq!(near, ConfusionCounts { tp: 8, fp: 0, fn_: 0 });
        let far = confusion(&vline(8, 8, 6), &gt, &band).unwrap();
        assert_eq!(far, ConfusionCounts { tp: 0, fp: 8, fn_: 8 });
    }

    #[test]
    fn f1_hand_cases() {
        let pr = f1(&ConfusionCounts { tp: 3, fp: 1, fn_: 2 });
        assert_eq!(pr.precision, 0.75);
        assert_eq!(pr.recall, 0.6);
        assert!((pr.f1 - 2.0 / 3.0).abs() < 1e-15);
        let pr = f1(&ConfusionCounts { tp: 3, fp: 2, fn_: 2 });
        assert!((pr.f1 - 0.6).abs() < 1e-15);
        assert_eq!(f1(&ConfusionCounts { tp: 0, fp: 4, fn_: 1 }).f1, 0.0);
        assert_eq!(f1(&ConfusionCounts::default()).f1, 0.0);
    }

    #[test]
    fn iou_hand_cases() {
        let gt = Mask::from_fn(12, 12, |y, x| x == 5 && y < 10);
        assert_eq!(iou_metric(&gt, &gt).unwrap(), 1.0);
        assert_eq!(iou_metric(&Mask::new(12, 12), &gt).unwrap(), 0.0);
        let off = Mask::from_fn(12, 12, |y, x| x == 6 && y < 10);
        assert_eq!(iou_metric(&off, &gt).unwrap(), 0.5);
        assert_eq!(iou_metric(&Mask::new(3, 3), &Mask::new(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(iou_metric(&Mask::new(3, 3), &Mask::new(3, 4)).is_err());
        assert!(ssim(&[0.0f64, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn ssim_identities() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let c = vec![0.4f64; 16];
        assert_eq!(ssim(&c, &c).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_negated_pattern() {
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let var = 0.25 * 100.0 / 99.0;
        let want = (-var + SSIM_C3) / (var + SSIM_C3);
        let got = ssim(&x, &y).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(got < 0.0);
    }

    #[test]
    fn median_positives() {
        let mk = |p: usize| ImageScore {
            id: String::new(),
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            iou: 0.0,
            ssim: 0.0,
            positives: p,
            counts: ConfusionCounts::default(),
        };
        let r = MetricsReport::new(vec![mk(5), mk(1), mk(9)], serde_json::Value::Null);
        assert_eq!(r.median_positives(), 5.0);
        let r = MetricsReport::new(vec![mk(5), mk(1), mk(9), mk(2)], serde_json::Value::Null);
        assert_eq!(r.median_positives(), 3.5);
    }
}
