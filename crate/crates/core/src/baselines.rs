//! Classical edge detectors used as reference points: thresholded Sobel
//! magnitude, and Canny (Gaussian smoothing, Sobel, four-sector
//! non-maximum suppression, double-threshold hysteresis).
//!
//! Borders are handled by clamping coordinates to the image (replicate
//! padding), so a constant image has zero gradient everywhere.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{score_image, MetricsReport};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Mask};

/// Single-channel view over the first plane of a map.
struct Plane<'a, T> {
    h: usize,
    w: usize,
    data: &'a [T],
}

impl<'a, T: Scalar> Plane<'a, T> {
    fn of(img: &'a FeatureMap<T>) -> Self {
        let s = img.shape();
        Plane {
            h: s.h,
            w: s.w,
            data: img.plane(0, 0),
        }
    }

    #[inline]
    fn clamped(&self, y: isize, x: isize) -> T {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub gx: FeatureMap<T>,
    pub gy: FeatureMap<T>,
    pub magnitude: FeatureMap<T>,
}

/// Horizontal kernel `[[−1,0,1],[−2,0,2],[−1,0,1]]` and its transpose.
pub fn sobel<T: Scalar>(img: &FeatureMap<T>) -> Gradients<T> {
    let p = Plane::of(img);
    let shape = crate::tensor::Shape::new(1, 1, p.h, p.w);
    let two = T::of(2.0);
    let gx = FeatureMap::from_fn(shape, |_, _, y, x| {
        let (y, x) = (y as isize, x as isize);
        (p.clamped(y - 1, x + 1) + two * p.clamped(y, x + 1) + p.clamped(y + 1, x + 1))
            - (p.clamped(y - 1, x - 1) + two * p.clamped(y, x - 1) + p.clamped(y + 1, x - 1))
    });
    let gy = FeatureMap::from_fn(shape, |_, _, y, x| {
        let (y, x) = (y as isize, x as isize);
        (p.clamped(y + 1, x - 1) + two * p.clamped(y + 1, x) + p.clamped(y + 1, x + 1))
            - (p.clamped(y - 1, x - 1) + two * p.clamped(y - 1, x) + p.clamped(y - 1, x + 1))
    });
    let magnitude = FeatureMap::from_fn(shape, |_, _, y, x| {
        let a = gx.at(0, 0, y, x);
        let b = gy.at(0, 0, y, x);
        (a * a + b * b).sqrt()
    });
    Gradients { gx, gy, magnitude }
}

/// Pixels whose Sobel magnitude exceeds `threshold`.
pub fn sobel_edges<T: Scalar>(img: &FeatureMap<T>, threshold: f64) -> Mask {
    let s = img.shape();
    let g = sobel(img);
    Mask::from_fn(s.h, s.w, |y, x| g.magnitude.at(0, 0, y, x).as_f64() > threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyConfig {
    pub gaussian_sigma: f64,
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        CannyConfig {
            gaussian_sigma: 1.4,
            t_low: 0.3,
            t_high: 0.6,
        }
    }
}

impl CannyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 {
            return Err(Error::Config(format!(
                "gaussian_sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        if !(self.t_low > 0.0 && self.t_low <= self.t_high) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < t_low <= t_high, got {} and {}",
                self.t_low, self.t_high
            )));
        }
        Ok(())
    }
}

/// Normalised 1-D Gaussian of radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn gaussian_blur<T: Scalar>(img: &FeatureMap<T>, sigma: f64) -> FeatureMap<T> {
    let k: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::of).collect();
    let r = (k.len() / 2) as isize;
    let p = Plane::of(img);
    let shape = crate::tensor::Shape::new(1, 1, p.h, p.w);
    let rows = FeatureMap::from_fn(shape, |_, _, y, x| {
        k.iter()
            .enumerate()
            .map(|(i, &w)| w * p.clamped(y as isize, x as isize + i as isize - r))
            .sum()
    });
    let q = Plane::of(&rows);
    FeatureMap::from_fn(shape, |_, _, y, x| {
        k.iter()
            .enumerate()
            .map(|(i, &w)| w * q.clamped(y as isize + i as isize - r, x as isize))
            .sum()
    })
}

/// Neighbour offset `(dy, dx)` along the gradient, quantised to 0°, 45°,
/// 90° or 135° (y grows downward).
fn direction_offset(gx: f64, gy: f64) -> (isize, isize) {
    let mut a = gy.atan2(gx).to_degrees();
    if a < 0.0 {
        a += 180.0;
    }
    if !(22.5..157.5).contains(&a) {
        (0, 1)
    } else if a < 67.5 {
        (1, 1)
    } else if a < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

/// Keeps a magnitude only if it is a local maximum across the edge. On a
/// plateau the pixel on the negative side wins, so a symmetric ridge keeps
/// exactly one pixel.
pub fn non_maximum_suppression<T: Scalar>(g: &Gradients<T>) -> FeatureMap<T> {
    let s = g.magnitude.shape();
    let (h, w) = (s.h as isize, s.w as isize);
    let mag = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h || x >= w {
            T::zero()
        } else {
            g.magnitude.at(0, 0, y as usize, x as usize)
        }
    };
    FeatureMap::from_fn(s, |_, _, y, x| {
        let m = g.magnitude.at(0, 0, y, x);
        if m <= T::zero() {
            return T::zero();
        }
        let (dy, dx) = direction_offset(g.gx.at(0, 0, y, x).as_f64(), g.gy.at(0, 0, y, x).as_f64());
        let (y, x) = (y as isize, x as isize);
        let before = mag(y - dy, x - dx);
        let after = mag(y + dy, x + dx);
        if m > before && m >= after {
            m
        } else {
            T::zero()
        }
    })
}

/// Pixels of the weak map (`≥ low`) that are 8-connected through weak
/// pixels to some strong pixel (`≥ high`).
pub fn hysteresis<T: Scalar>(magnitude: &FeatureMap<T>, low: f64, high: f64) -> Mask {
    let s = magnitude.shape();
    let weak = Mask::from_fn(s.h, s.w, |y, x| magnitude.at(0, 0, y, x).as_f64() >= low);
    let mut out = Mask::new(s.h, s.w);
    let mut queue = VecDeque::new();
    for y in 0..s.h {
        for x in 0..s.w {
            if weak.get(y, x) && magnitude.at(0, 0, y, x).as_f64() >= high {
                out.set(y, x, true);
                queue.push_back((y, x));
            }
        }
    }
    while let Some((y, x)) = queue.pop_front() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if weak.get_signed(ny, nx) && !out.get(ny as usize, nx as usize) {
                    out.set(ny as usize, nx as usize, true);
                    queue.push_back((ny as usize, nx as usize));
                }
            }
        }
    }
    out
}

pub fn canny<T: Scalar>(img: &FeatureMap<T>, config: &CannyConfig) -> Result<Mask> {
    config.validate()?;
    let smooth = gaussian_blur(img, config.gaussian_sigma);
    let thin = non_maximum_suppression(&sobel(&smooth));
    Ok(hysteresis(&thin, config.t_low, config.t_high))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BaselineOp {
    Sobel { threshold: f64 },
    Canny(CannyConfig),
}

impl BaselineOp {
    pub fn apply(&self, img: &FeatureMap<f32>) -> Result<Mask> {
        match self {
            BaselineOp::Sobel { threshold } => Ok(sobel_edges(img, *threshold)),
            BaselineOp::Canny(c) => canny(img, c),
        }
    }
}

/// Scores a baseline over a dataset; SSIM is taken on the binary output.
pub fn evaluate_baseline(samples: &[Sample], op: &BaselineOp) -> Result<MetricsReport> {
    let per_image = samples
        .iter()
        .map(|s| {
            let pred = op.apply(&s.image)?;
            score_image(&s.id, &pred, &pred.to_reals::<f32>(), &s.gt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::new(per_image, serde_json::to_value(op)?))
}

/// Sobel threshold candidates swept by [`calibrate_sobel`].
pub fn sobel_threshold_grid() -> Vec<f64> {
    (1..=40).map(|i| i as f64 * 0.1).collect()
}

/// Picks the threshold with the best mean F1 on `samples` (first wins ties).
pub fn calibrate_sobel(samples: &[Sample], grid: &[f64]) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, -1.0);
    for &t in grid {
        let f = evaluate_baseline(samples, &BaselineOp::Sobel { threshold: t })?
            .aggregate
            .f1;
        if f > best.1 {
            best = (t, f);
        }
    }
    Ok(best)
}

/// `(t_low, t_high)` candidates swept by [`calibrate_canny`]: high in
/// 0.1..=2.0, low at 0.4 or 0.7 of high.
pub fn canny_threshold_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for i in 1..=20 {
        let high = i as f64 * 0.1;
        for frac in [0.4, 0.7] {
            grid.push((high * frac, high));
        }
    }
    grid
}

pub fn calibrate_canny(samples: &[Sample], sigma: f64, grid: &[(f64, f64)]) -> Result<(CannyConfig, f64)> {
    let mut best = (CannyConfig::default(), -1.0);
    for &(t_low, t_high) in grid {
        let cfg = CannyConfig {
            gaussian_sigma: sigma,
            t_low,
            t_high,
        };
        let f = evaluate_baseline(samples, &BaselineOp::Canny(cfg))?.aggregate.f1;
        if f > best.1 {
            best = (cfg, f);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn step(h: usize, w: usize, at: usize) -> FeatureMap<f64> {
        FeatureMap::from_fn(Shape::new(1, 1, h, w), |_, _, _, x| if x >= at { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let img = FeatureMap::filled(Shape::new(1, 1, 8, 8), 0.6f64);
        assert!(sobel(&img).magnitude.data().iter().all(|&m| m == 0.0));
        assert!(sobel_edges(&img, 0.0).is_empty());
        let c = CannyConfig::default();
        assert!(canny(&img, &c).unwrap().is_empty());
    }

    #[test]
    fn step_gives_four_on_boundary_columns() {
        let g = sobel(&step(6, 10, 5));
        for y in 0..6 {
            for x in 0..10 {
                let want = if x == 4 || x == 5 { 4.0 } else { 0.0 };
                assert_eq!(g.gx.at(0, 0, y, x).abs(), want);
                assert_eq!(g.gy.at(0, 0, y, x), 0.0);
            }
        }
        let m = sobel_edges(&step(6, 10, 5), 2.0);
        assert_eq!(m, Mask::from_fn(6, 10, |_, x| x == 4 || x == 5));
        assert!(!sobel_edges(&step(6, 10, 5), 0.0).is_empty());
        assert!(sobel_edges(&step(6, 10, 5), f64::INFINITY).is_empty());
    }

    #[test]
    fn rotation_swaps_components() {
        let img = FeatureMap::from_fn(Shape::new(1, 1, 7, 7), |_, _, y, x| ((y * 3 + x * x) % 5) as f64);
        // Transpose is a rotation composed with a flip; magnitudes of the
        // components swap.
        let t = FeatureMap::from_fn(img.shape(), |_, _, y, x| img.at(0, 0, x, y));
        let a = sobel(&img);
        let b = sobel(&t);
        for y in 0..7 {
            for x in 0..7 {
                assert_eq!(a.gx.at(0, 0, y, x).abs(), b.gy.at(0, 0, x, y).abs());
                assert_eq!(a.gy.at(0, 0, y, x).abs(), b.gx.at(0, 0, x, y).abs());
            }
        }
    }

    #[test]
    fn canny_rejects_bad_thresholds() {
        let img = step(8, 8, 4);
        let bad = CannyConfig {
            gaussian_sigma: 1.4,
            t_low: 0.8,
            t_high: 0.4,
        };
        assert!(canny(&img, &bad).is_err());
        let zero = CannyConfig {
            t_low: 0.0,
            ..CannyConfig::default()
        };
        assert!(canny(&img, &zero).is_err());
    }

    #[test]
    fn gaussian_kernel_is_normalised() {
        let k = gaussian_kernel(1.4);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
