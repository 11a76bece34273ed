//! Class-balanced cross entropy, the ratio IoU penalty, the optional
//! SmoothL1 term, and the five-map prediction average.
//!
//! Every loss is a sum over pixels and returns its exact gradient with
//! respect to the probability map it was given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OutputGrads, SideOutputSet, NUM_STAGES};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarLoss {
    None,
    SmoothL1,
}

impl std::str::FromStr for StarLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(StarLoss::None),
            "smooth_l1" | "smoothl1" => Ok(StarLoss::SmoothL1),
            other => Err(Error::Config(format!(
                "unknown star loss `{other}` (expected none or smooth_l1)"
            ))),
        }
    }
}

impl std::fmt::Display for StarLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StarLoss::None => "none",
            StarLoss::SmoothL1 => "smooth_l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Extra weight on non-edge pixels.
    pub r: f64,
    pub use_iou: bool,
    pub star: StarLoss,
    /// Probability clamp and IoU denominator guard.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            r: 1.9,
            use_iou: true,
            star: StarLoss::None,
            epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be positive, got {}", self.r)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Loss terms of one output map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MapLoss {
    pub bce: f64,
    pub iou: f64,
    pub star: f64,
    pub total: f64,
}

/// Per-map terms (four sides, then fused) and their grand total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub maps: [MapLoss; NUM_STAGES + 1],
    pub total: f64,
}

impl LossBreakdown {
    /// Sums of each term over the five maps.
    pub fn summed(&self) -> MapLoss {
        self.maps.iter().fold(MapLoss::default(), |acc, m| MapLoss {
            bce: acc.bce + m.bce,
            iou: acc.iou + m.iou,
            star: acc.star + m.star,
            total: acc.total + m.total,
        })
    }
}

fn check_binary<T: Scalar>(gt: &[T]) -> Result<usize> {
    let mut pos = 0;
    for &g in gt {
        if g == T::one() {
            pos += 1;
        } else if g != T::zero() {
            return Err(Error::InvalidArgument(format!("ground truth value {g} is not binary")));
        }
    }
    Ok(pos)
}

fn check_len<T>(op: &'static str, a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(
            op,
            format!("{} predictions vs {} labels", a.len(), b.len()),
        ));
    }
    Ok(())
}

/// Fraction of non-edge pixels, `|Y−| / (|Y+| + |Y−|)`.
pub fn beta(gt: &Mask) -> f64 {
    let total = gt.bits().len();
    if total == 0 {
        return 0.0;
    }
    (total - gt.count()) as f64 / total as f64
}

/// `−Σ [w_pos·log p | y=1 ; w_neg·log(1−p) | y=0]` with `p` clamped to
/// `[ε, 1−ε]`. The gradient is the derivative of the log terms evaluated at
/// the clamped probability.
pub fn weighted_bce<T: Scalar>(prob: &[T], gt: &[T], w_pos: f64, w_neg: f64, epsilon: f64) -> Result<(f64, Vec<T>)> {
    check_len("weighted_bce", prob, gt)?;
    check_binary(gt)?;
    let lo = epsilon;
    let hi = 1.0 - epsilon;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(prob.len());
    for (&p, &g) in prob.iter().zip(gt) {
        let pc = p.as_f64().clamp(lo, hi);
        if g == T::one() {
            loss -= w_pos * pc.ln();
            grad.push(T::of(-w_pos / pc));
        } else {
            loss -= w_neg * (1.0 - pc).ln();
            grad.push(T::of(w_neg / (1.0 - pc)));
        }
    }
    Ok((loss, grad))
}

/// Class-balanced cross entropy with edge weight `β` and non-edge weight
/// `r(1−β)`. An image without edge pixels weights every pixel by `r`.
pub fn balanced_bce<T: Scalar>(prob: &[T], gt: &[T], r: f64, epsilon: f64) -> Result<(f64, Vec<T>)> {
    check_len("balanced_bce", prob, gt)?;
    let pos = check_binary(gt)?;
    if prob.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let b = (prob.len() - pos) as f64 / prob.len() as f64;
    let (w_pos, w_neg) = if pos == 0 { (b, r) } else { (b, r * (1.0 - b)) };
    weighted_bce(prob, gt, w_pos, w_neg, epsilon)
}

/// `(1 − |Y+| / (Σp + ε))²`, pushing the soft predicted edge count toward
/// the true count. Zero (with zero gradient) when the image has no edges.
pub fn iou_loss<T: Scalar>(prob: &[T], gt: &[T], epsilon: f64) -> Result<(f64, Vec<T>)> {
    check_len("iou_loss", prob, gt)?;
    let pos = check_binary(gt)? as f64;
    if pos == 0.0 {
        return Ok((0.0, vec![T::zero(); prob.len()]));
    }
    let union: f64 = prob.iter().map(|p| p.as_f64()).sum::<f64>() + epsilon;
    let ratio = pos / union;
    let loss = (1.0 - ratio).powi(2);
    let g = T::of(2.0 * (1.0 - ratio) * pos / (union * union));
    Ok((loss, vec![g; prob.len()]))
}

/// Summed SmoothL1 of `p − y`.
pub fn smooth_l1<T: Scalar>(prob: &[T], gt: &[T]) -> Result<(f64, Vec<T>)> {
    check_len("smooth_l1", prob, gt)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(prob.len());
    for (&p, &g) in prob.iter().zip(gt) {
        let d = (p - g).as_f64();
        if d.abs() < 1.0 {
            loss += 0.5 * d * d;
            grad.push(T::of(d));
        } else {
            loss += d.abs() - 0.5;
            grad.push(T::of(d.signum()));
        }
    }
    Ok((loss, grad))
}

/// Loss of one map and its gradient.
pub fn map_loss<T: Scalar>(prob: &[T], gt: &[T], config: &LossConfig) -> Result<(MapLoss, Vec<T>)> {
    let (bce, mut grad) = balanced_bce(prob, gt, config.r, config.epsilon)?;
    let mut terms = MapLoss {
        bce,
        ..MapLoss::default()
    };
    if config.use_iou {
        let (iou, g) = iou_loss(prob, gt, config.epsilon)?;
        terms.iou = iou;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    if config.star == StarLoss::SmoothL1 {
        let (star, g) = smooth_l1(prob, gt)?;
        terms.star = star;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    terms.total = terms.bce + terms.iou + terms.star;
    Ok((terms, grad))
}

/// Sum of the per-map losses over the four side maps and the fused map,
/// with gradients for each. `gt` must be a single-item, single-channel mask
/// matching the map size; batched outputs are scored item by item against
/// the same mask.
pub fn total_loss<T: Scalar>(
    outputs: &SideOutputSet<T>,
    gt: &Mask,
    config: &LossConfig,
) -> Result<(LossBreakdown, OutputGrads<T>)> {
    config.validate()?;
    let shape = outputs.fused_prob.shape();
    if shape.c != 1 || (shape.h, shape.w) != gt.dims() {
        return Err(Error::shape(
            "total_loss",
            format!("outputs {shape} vs ground truth {}x{}", gt.height(), gt.width()),
        ));
    }
    let target: Vec<T> = gt.to_reals();
    let mut breakdown = LossBreakdown::default();
    let mut grads: Vec<FeatureMap<T>> = Vec::with_capacity(NUM_STAGES + 1);
    for (m, map) in outputs.prob_maps().into_iter().enumerate() {
        let mut g = FeatureMap::zeros(shape);
        for n in 0..shape.n {
            let (terms, gn) = map_loss(map.plane(n, 0), &target, config)?;
            let acc = &mut breakdown.maps[m];
            acc.bce += terms.bce;
            acc.iou += terms.iou;
            acc.star += terms.star;
            acc.total += terms.total;
            g.plane_mut(n, 0).copy_from_slice(&gn);
        }
        grads.push(g);
    }
    breakdown.total = breakdown.maps.iter().map(|m| m.total).sum();
    let fused = grads.pop().expect("five gradient maps");
    let side: [FeatureMap<T>; NUM_STAGES] = grads.try_into().expect("four side gradients");
    Ok((breakdown, OutputGrads { side, fused }))
}

/// Arithmetic mean of the four side probabilities and the fused probability.
pub fn predict_average<T: Scalar>(outputs: &SideOutputSet<T>) -> FeatureMap<T> {
    let maps = outputs.prob_maps();
    let mut avg = maps[0].clone();
    for m in &maps[1..] {
        avg.add_assign(m).expect("output maps share a shape");
    }
    let k = T::of(maps.len() as f64);
    avg.map(|v| v / k)
}
