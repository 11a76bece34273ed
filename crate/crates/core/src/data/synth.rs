//! Seeded synthetic weak-edge images.
//!
//! Each image holds one to three fronts: open centripetal Catmull-Rom curves
//! rendered as Gaussian ridges over a flat ocean level plus two octaves of
//! value noise. Some images also contain a land region set to 0, whose hard
//! step is a strong edge that is not part of the ground truth. Everything
//! is drawn from the stream `SplitMix64::stream(seed, index)`.

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::Sample;
use crate::data::pgm::quantize;
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    /// `(height, width)`.
    pub size: (usize, usize),
    /// Inclusive range of fronts per image.
    pub fronts_per_image: (usize, usize),
    /// Gaussian cross-section sigma in pixels.
    pub ridge_width: f64,
    /// Inclusive range the per-front peak height is drawn from.
    pub ridge_peak: (f64, f64),
    pub noise_amplitude: f64,
    /// Probability that an image contains land.
    pub land_fraction: f64,
    /// Flat ocean value the ridges and noise sit on.
    pub ocean_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            count: 365,
            size: (128, 128),
            fronts_per_image: (1, 3),
            ridge_width: 2.5,
            ridge_peak: (0.45, 0.9),
            noise_amplitude: 0.08,
            land_fraction: 0.3,
            ocean_level: 0.3,
        }
    }
}

const MIN_SIDE: usize = 32;
/// Ridge threshold below which a front would not count as one.
const PEAK_FLOOR: f64 = 0.4;
/// Chebyshev clearance between a front and land or another front.
const LAND_CLEARANCE: usize = 4;
const FRONT_CLEARANCE: usize = 8;
const MIN_FRONT_PIXELS: usize = 16;
const FRONT_ATTEMPTS: usize = 200;
const SCENE_ATTEMPTS: usize = 50;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (h, w) = self.size;
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if h % 8 != 0 || w % 8 != 0 || h < MIN_SIDE || w < MIN_SIDE {
            return bad(format!("size {h}x{w} must be multiples of 8 and at least {MIN_SIDE}"));
        }
        let (lo, hi) = self.fronts_per_image;
        if lo == 0 || lo > hi {
            return bad(format!("fronts_per_image ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        if !(self.ridge_width > 0.0 && self.ridge_width.is_finite()) {
            return bad(format!("ridge_width {} must be positive", self.ridge_width));
        }
        let (plo, phi) = self.ridge_peak;
        if !(plo > PEAK_FLOOR && plo <= phi && phi <= 1.0) {
            return bad(format!(
                "ridge_peak ({plo}, {phi}) must satisfy {PEAK_FLOOR} < min <= max <= 1"
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_amplitude) {
            return bad(format!("noise_amplitude {} outside [0, 1]", self.noise_amplitude));
        }
        if !(0.0..=1.0).contains(&self.land_fraction) {
            return bad(format!("land_fraction {} outside [0, 1]", self.land_fraction));
        }
        if !(0.0..1.0).contains(&self.ocean_level) {
            return bad(format!("ocean_level {} outside [0, 1)", self.ocean_level));
        }
        Ok(())
    }
}

pub fn generate(config: &SynthConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    (0..config.count).map(|i| generate_one(config, i)).collect()
}

/// Sample `index` of the corpus described by `config`.
pub fn generate_one(config: &SynthConfig, index: usize) -> Result<Sample> {
    config.validate()?;
    let (h, w) = config.size;
    let mut rng = SplitMix64::stream(config.seed, index as u64);

    let has_land = rng.bernoulli(config.land_fraction);
    let noise = value_noise(&mut rng, h, w);
    let n_fronts = rng.range_inclusive(config.fronts_per_image.0, config.fronts_per_image.1);

    for _ in 0..SCENE_ATTEMPTS {
        let land = if has_land {
            Some(draw_land(&mut rng, h, w))
        } else {
            None
        };
        let keep_out = match &land {
            Some(l) => dilate(l, LAND_CLEARANCE),
            None => Mask::new(h, w),
        };
        let mut fronts: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut gt = Mask::new(h, w);
        for _ in 0..n_fronts {
            let near_fronts = dilate(&gt, FRONT_CLEARANCE);
            let accepted = (0..FRONT_ATTEMPTS).find_map(|_| {
                let chain = draw_front(&mut rng, h, w)?;
                let clear = chain
                    .iter()
                    .all(|&(y, x)| !keep_out.get(y, x) && !near_fronts.get(y, x));
                clear.then_some(chain)
            });
            if let Some(chain) = accepted {
                for &(y, x) in &chain {
                    gt.set(y, x, true);
                }
                fronts.push(chain);
            }
        }
        if fronts.is_empty() {
            continue;
        }
        let peaks: Vec<f64> = fronts
            .iter()
            .map(|_| rng.uniform(config.ridge_peak.0, config.ridge_peak.1))
            .collect();
        let ridges = render_ridges(h, w, &fronts, &peaks, config.ridge_width);
        let image = compose(config, &ridges, &noise, land.as_ref());
        return Ok(Sample {
            id: format!("{index:04}"),
            image,
            gt,
            land,
        });
    }
    Err(Error::Config(format!(
        "could not place any front in sample {index} after {SCENE_ATTEMPTS} attempts"
    )))
}

fn compose(config: &SynthConfig, ridges: &[f64], noise: &[f64], land: Option<&Mask>) -> FeatureMap<f32> {
    let (h, w) = config.size;
    let data = (0..h * w)
        .map(|i| {
            if land.is_some_and(|l| l.bits()[i] != 0) {
                return 0.0;
            }
            let v = config.ocean_level + ridges[i] + config.noise_amplitude * noise[i];
            quantize(v as f32) as f32 / 255.0
        })
        .collect();
    FeatureMap::from_plane(h, w, data).expect("plane length matches size")
}

/// Sum over fronts of `peak · exp(−d²/2σ²)`, `d` being the distance to the
/// nearest rasterised centreline pixel of that front.
pub fn render_ridges(h: usize, w: usize, fronts: &[Vec<(usize, usize)>], peaks: &[f64], sigma: f64) -> Vec<f64> {
    let reach = (4.0 * sigma).ceil() as isize;
    let mut out = vec![0.0; h * w];
    let mut d2 = vec![f64::INFINITY; h * w];
    for (chain, &peak) in fronts.iter().zip(peaks) {
        d2.fill(f64::INFINITY);
        for &(cy, cx) in chain {
            for dy in -reach..=reach {
                let y = cy as isize + dy;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dx in -reach..=reach {
                    let x = cx as isize + dx;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    let i = y as usize * w + x as usize;
                    let d = (dy * dy + dx * dx) as f64;
                    if d < d2[i] {
                        d2[i] = d;
                    }
                }
            }
        }
        for (o, &d) in out.iter_mut().zip(&d2) {
            if d.is_finite() {
                *o += peak * (-d / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    out
}

/// Two octaves (cells of 32 and 16 px, weights 1 and 1/2) of bilinearly
/// interpolated uniform lattice noise, normalised to `[-1, 1]`.
fn value_noise(rng: &mut SplitMix64, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let octaves = [(32usize, 1.0), (16, 0.5)];
    let total: f64 = octaves.iter().map(|o| o.1).sum();
    for (cell, weight) in octaves {
        let gh = h / cell + 2;
        let gw = w / cell + 2;
        let grid: Vec<f64> = (0..gh * gw).map(|_| rng.uniform(-1.0, 1.0)).collect();
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let y0 = fy.floor() as usize;
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let x0 = fx.floor() as usize;
                let tx = fx - x0 as f64;
                let g = |yy: usize, xx: usize| grid[yy * gw + xx];
                let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
                let bot = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
                out[y * w + x] += weight / total * (top * (1.0 - ty) + bot * ty);
            }
        }
    }
    out
}

/// A half-plane whose coast carries two sine waves, or a disc with a
/// wobbly radius, covering
/// between 10% and 55% of the image.
fn draw_land(rng: &mut SplitMix64, h: usize, w: usize) -> Mask {
    use std::f64::consts::TAU;
    let side = h.min(w) as f64;
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    loop {
        let mask = if rng.bernoulli(0.5) {
            let (ny, nx) = rng.uniform(0.0, TAU).sin_cos();
            let offset = rng.uniform(0.0, 0.3) * side;
            let waves: Vec<(f64, f64, f64)> = [(3.0, 8.0, 0.15, 0.3), (1.0, 3.0, 0.06, 0.1)]
                .iter()
                .map(|&(a0, a1, l0, l1)| (rng.uniform(a0, a1), rng.uniform(l0, l1) * side, rng.uniform(0.0, TAU)))
                .collect();
            Mask::from_fn(h, w, |y, x| {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let along = dy * nx - dx * ny;
                let coast: f64 = waves.iter().map(|&(a, l, p)| a * (TAU * along / l + p).sin()).sum();
                dy * ny + dx * nx > offset + coast
            })
        } else {
            let by = rng.uniform(0.0, h as f64);
            let bx = rng.uniform(0.0, w as f64);
            let r0 = rng.uniform(0.25, 0.45) * side;
            let harmonics: Vec<(f64, f64, f64)> = (2..=9)
                .map(|k| (k as f64, rng.uniform(0.0, 0.4 / k as f64), rng.uniform(0.0, TAU)))
                .collect();
            Mask::from_fn(h, w, |y, x| {
                let (dy, dx) = (y as f64 - by, x as f64 - bx);
                let phi = dy.atan2(dx);
                let wobble: f64 = harmonics.iter().map(|&(k, a, p)| a * (k * phi + p).sin()).sum();
                let r = r0 * (1.0 + wobble);
                dy * dy + dx * dx < r * r
            })
        };
        let frac = mask.count() as f64 / (h * w) as f64;
        if (0.1..=0.55).contains(&frac) {
            return mask;
        }
    }
}

/// Pixels within Chebyshev distance `r` of a set pixel.
fn dilate(mask: &Mask, r: usize) -> Mask {
    let (h, w) = mask.dims();
    let mut out = Mask::new(h, w);
    for (y, x) in mask.iter_set() {
        for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
            for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                out.set(yy, xx, true);
            }
        }
    }
    out
}

/// One candidate centreline as an ordered 8-connected chain, or `None` if it
/// leaves the image, crosses itself, or is too short.
fn draw_front(rng: &mut SplitMix64, h: usize, w: usize) -> Option<Vec<(usize, usize)>> {
    let (hf, wf) = (h as f64, w as f64);
    let side = hf.min(wf);
    let margin = 4.0;
    let cy = rng.uniform(0.25, 0.75) * hf;
    let cx = rng.uniform(0.25, 0.75) * wf;
    let theta = rng.uniform(0.0, std::f64::consts::PI);
    let (uy, ux) = theta.sin_cos();
    let (vy, vx) = (ux, -uy);
    let len = rng.uniform(0.25, 0.6) * side;
    let n = rng.range_inclusive(4, 7);
    let mut along: Vec<f64> = (0..n).map(|_| rng.uniform(-len / 2.0, len / 2.0)).collect();
    along.sort_by(f64::total_cmp);
    let pts: Vec<(f64, f64)> = along
        .iter()
        .map(|&t| {
            let s = rng.uniform(-0.12, 0.12) * side;
            (cy + t * uy + s * vy, cx + t * ux + s * vx)
        })
        .collect();
    let inside = |&(y, x): &(f64, f64)| y >= margin && y <= hf - 1.0 - margin && x >= margin && x <= wf - 1.0 - margin;
    if !pts.iter().all(inside) || pts.windows(2).any(|p| dist(p[0], p[1]) < 2.0) {
        return None;
    }
    let curve = catmull_rom(&pts);
    if !curve
        .iter()
        .all(|&(y, x)| y >= 0.0 && x >= 0.0 && y <= hf - 1.0 && x <= wf - 1.0)
    {
        return None;
    }
    let chain = thin_chain(&rasterize(&curve));
    let as_mask = {
        let mut m = Mask::new(h, w);
        for &(y, x) in &chain {
            if m.get(y, x) {
                return None;
            }
            m.set(y, x, true);
        }
        m
    };
    if chain.len() < MIN_FRONT_PIXELS || chain.iter().any(|&(y, x)| as_mask.neighbour_count(y, x) > 2) {
        return None;
    }
    Some(chain)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Dense samples of the centripetal Catmull-Rom spline through `pts`, with
/// reflected phantom end points.
pub fn catmull_rom(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = pts.len();
    let reflect = |a: (f64, f64), b: (f64, f64)| (2.0 * a.0 - b.0, 2.0 * a.1 - b.1);
    let mut ext = Vec::with_capacity(n + 2);
    ext.push(reflect(pts[0], pts[1]));
    ext.extend_from_slice(pts);
    ext.push(reflect(pts[n - 1], pts[n - 2]));

    let lerp = |a: (f64, f64), b: (f64, f64), ta: f64, tb: f64, t: f64| {
        let u = (t - ta) / (tb - ta);
        (a.0 + (b.0 - a.0) * u, a.1 + (b.1 - a.1) * u)
    };
    let mut out = vec![pts[0]];
    for seg in ext.windows(4) {
        let [p0, p1, p2, p3] = [seg[0], seg[1], seg[2], seg[3]];
        let t0 = 0.0;
        let t1 = t0 + dist(p0, p1).sqrt().max(1e-9);
        let t2 = t1 + dist(p1, p2).sqrt().max(1e-9);
        let t3 = t2 + dist(p2, p3).sqrt().max(1e-9);
        let steps = (dist(p1, p2) * 4.0).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let t = t1 + (t2 - t1) * s as f64 / steps as f64;
            let a1 = lerp(p0, p1, t0, t1, t);
            let a2 = lerp(p1, p2, t1, t2, t);
            let a3 = lerp(p2, p3, t2, t3, t);
            let b1 = lerp(a1, a2, t0, t2, t);
            let b2 = lerp(a2, a3, t1, t3, t);
            out.push(lerp(b1, b2, t1, t2, t));
        }
    }
    out
}

/// Rounds samples to pixels, bridging gaps with Bresenham lines.
pub fn rasterize(curve: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let mut chain: Vec<(isize, isize)> = Vec::new();
    for &(y, x) in curve {
        let p = (y.round() as isize, x.round() as isize);
        match chain.last() {
            Some(&q) if q == p => {}
            Some(&q) => {
                let line = bresenham(q, p);
                chain.extend_from_slice(&line[1..]);
            }
            None => chain.push(p),
        }
    }
    chain.into_iter().map(|(y, x)| (y as usize, x as usize)).collect()
}

/// Integer line from `a` to `b`, both ends included.
pub fn bresenham(a: (isize, isize), b: (isize, isize)) -> Vec<(isize, isize)> {
    let (mut y, mut x) = a;
    let dx = (b.1 - x).abs();
    let dy = -(b.0 - y).abs();
    let sx = if x < b.1 { 1 } else { -1 };
    let sy = if y < b.0 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = vec![(y, x)];
    while (y, x) != b {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((y, x));
    }
    out
}

/// Drops chain pixels whose neighbours along the chain already touch, so
/// the centreline has no staircase corners.
pub fn thin_chain(chain: &[(usize, usize)]) -> Vec<(usize, usize)> {
    if chain.len() < 3 {
        return chain.to_vec();
    }
    let touching = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1;
    let mut out = vec![chain[0]];
    for i in 1..chain.len() - 1 {
        if !touching(*out.last().unwrap(), chain[i + 1]) {
            out.push(chain[i]);
        }
    }
    out.push(chain[chain.len() - 1]);
    out
}

/// Pixels whose 3×3 neighbourhood holds both land and sea.
pub fn land_boundary(land: &Mask) -> Mask {
    let (h, w) = land.dims();
    Mask::from_fn(h, w, |y, x| {
        let mut seen = [false; 2];
        for yy in y.saturating_sub(1)..(y + 2).min(h) {
            for xx in x.saturating_sub(1)..(x + 2).min(w) {
                seen[land.get(yy, xx) as usize] = true;
            }
        }
        seen[0] && seen[1]
    })
}
