//! Central finite-difference checks of every hand-written backward pass,
//! run in 64-bit.
//!
//! Layer checks use the scalar `Σ r ⊙ y` for a fixed random `r`, so the
//! upstream gradient is `r`. Loss checks differentiate the loss itself.
//! Entries where the one-sided differences disagree sit on a kink (ReLU at
//! zero, a max-pool tie) and are skipped; a suite fails if more than a
//! tenth of its entries are skipped.

use serde::Serialize;

use crate::data::rng::SplitMix64;
use crate::error::Result;
use crate::losses::{balanced_bce, iou_loss, map_loss, smooth_l1, total_loss, LossConfig, StarLoss};
use crate::model::{init_params, NetworkConfig, Wein};
use crate::ops::{
    conv2d, conv2d_backward, eltwise_add, eltwise_add_backward, maxpool2, maxpool2_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, upsample_bilinear, upsample_bilinear_backward, ConvKernel,
};
use crate::tensor::{FeatureMap, Mask, Shape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Corrupts the analytic convolution weight gradient, so the suite must
    /// fail. Used as a negative control.
    pub fault: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|)`, or the absolute difference when both are
/// below `1e-7`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        diff
    } else {
        diff / scale
    }
}

struct Checker<'a> {
    name: String,
    opts: &'a GradcheckOptions,
    checked: usize,
    skipped: usize,
    max_rel: f64,
}

impl<'a> Checker<'a> {
    fn new(name: impl Into<String>, opts: &'a GradcheckOptions) -> Self {
        Checker {
            name: name.into(),
            opts,
            checked: 0,
            skipped: 0,
            max_rel: 0.0,
        }
    }

    /// `f(delta)` evaluates the objective with one coordinate shifted by
    /// `delta`.
    fn entry(&mut self, analytic: f64, mut f: impl FnMut(f64) -> f64) {
        let h = self.opts.step;
        let (fp, f0, fm) = (f(h), f(0.0), f(-h));
        let numeric = (fp - fm) / (2.0 * h);
        let forward = (fp - f0) / h;
        let backward = (f0 - fm) / h;
        if rel_error(forward, backward) > 1e-2 && (forward - backward).abs() > 1e-4 {
            self.skipped += 1;
            return;
        }
        self.checked += 1;
        self.max_rel = self.max_rel.max(rel_error(analytic, numeric));
    }

    fn finish(self) -> SuiteResult {
        let total = self.checked + self.skipped;
        let passed = self.max_rel < self.opts.tolerance && self.checked > 0 && self.skipped * 10 <= total;
        SuiteResult {
            name: self.name,
            checked: self.checked,
            skipped: self.skipped,
            max_rel_error: self.max_rel,
            passed,
        }
    }
}

fn random_map(rng: &mut SplitMix64, shape: Shape) -> FeatureMap<f64> {
    FeatureMap::from_fn(shape, |_, _, _, _| rng.normal())
}

fn projection(y: &FeatureMap<f64>, r: &FeatureMap<f64>) -> f64 {
    y.dot(r).expect("projection shapes match")
}

/// Up to `limit` distinct indices below `n`, in a seeded order.
fn pick(rng: &mut SplitMix64, n: usize, limit: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.truncate(limit);
    idx
}

fn random_kernel(rng: &mut SplitMix64, out: usize, inp: usize, k: usize) -> Result<ConvKernel<f64>> {
    let mut kernel = ConvKernel::zeros(out, inp, k)?;
    kernel.weight.iter_mut().for_each(|w| *w = rng.normal() * 0.5);
    kernel.bias.iter_mut().for_each(|b| *b = rng.normal() * 0.5);
    Ok(kernel)
}

pub fn check_conv(opts: &GradcheckOptions, k: usize, stride: usize) -> Result<SuiteResult> {
    let mut rng = SplitMix64::stream(opts.seed, 1 + k as u64 * 10 + stride as u64);
    let pad = k / 2;
    let input = random_map(&mut rng, Shape::new(2, 3, 7, 6));
    let mut kernel = random_kernel(&mut rng, 4, 3, k)?;
    let y = conv2d(&input, &kernel, stride, pad)?;
    let r = random_map(&mut rng, y.shape());
    let g_in = conv2d_backward(&r, &input, &mut kernel, stride, pad)?;
    if opts.fault {
        kernel.grad_weight.iter_mut().for_each(|g| *g *= 1.5);
    }
    let mut c = Checker::new(format!("conv{k}x{k}/stride{stride}"), opts);
    let obj = |inp: &FeatureMap<f64>, ker: &ConvKernel<f64>| projection(&conv2d(inp, ker, stride, pad).unwrap(), &r);
    for i in pick(&mut rng, input.data().len(), 60) {
        c.entry(g_in.data()[i], |d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            obj(&x, &kernel)
        });
    }
    for i in pick(&mut rng, kernel.weight.len(), 60) {
        c.entry(kernel.grad_weight[i], |d| {
            let mut kk = kernel.clone();
            kk.weight[i] += d;
            obj(&input, &kk)
        });
    }
    for i in 0..kernel.bias.len() {
        c.entry(kernel.grad_bias[i], |d| {
            let mut kk = kernel.clone();
            kk.bias[i] += d;
            obj(&input, &kk)
        });
    }
    Ok(c.finish())
}

/// Checks a map-to-map op with no parameters.
fn check_unary(
    opts: &GradcheckOptions,
    name: &str,
    stream: u64,
    input: FeatureMap<f64>,
    forward: impl Fn(&FeatureMap<f64>) -> FeatureMap<f64>,
    backward: impl Fn(&FeatureMap<f64>, &FeatureMap<f64>, &FeatureMap<f64>) -> FeatureMap<f64>,
) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, stream);
    let y = forward(&input);
    let r = random_map(&mut rng, y.shape());
    let g = backward(&r, &input, &y);
    let mut c = Checker::new(name, opts);
    for i in pick(&mut rng, input.data().len(), 120) {
        c.entry(g.data()[i], |d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            projection(&forward(&x), &r)
        });
    }
    c.finish()
}

pub fn check_relu(opts: &GradcheckOptions) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, 100);
    let input = random_map(&mut rng, Shape::new(1, 2, 6, 6));
    check_unary(opts, "relu", 101, input, relu, |g, x, _| relu_backward(g, x).unwrap())
}

pub fn check_sigmoid(opts: &GradcheckOptions) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, 102);
    let input = random_map(&mut rng, Shape::new(1, 2, 6, 6)).map(|v| 3.0 * v);
    check_unary(opts, "sigmoid", 103, input, sigmoid, |g, _, y| {
        sigmoid_backward(g, y).unwrap()
    })
}

pub fn check_maxpool(opts: &GradcheckOptions) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, 104);
    let input = random_map(&mut rng, Shape::new(2, 2, 6, 8));
    check_unary(
        opts,
        "maxpool2",
        105,
        input,
        |x| maxpool2(x).unwrap().0,
        |g, x, _| {
            let (_, arg) = maxpool2(x).unwrap();
            maxpool2_backward(g, &arg, x.shape()).unwrap()
        },
    )
}

pub fn check_upsample(opts: &GradcheckOptions, factor: usize) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, 106 + factor as u64);
    let input = random_map(&mut rng, Shape::new(1, 2, 3, 4));
    check_unary(
        opts,
        &format!("upsample x{factor}"),
        120 + factor as u64,
        input,
        |x| upsample_bilinear(x, factor).unwrap(),
        |g, _, _| upsample_bilinear_backward(g, factor).unwrap(),
    )
}

pub fn check_eltwise(opts: &GradcheckOptions) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, 130);
    let shape = Shape::new(1, 2, 4, 4);
    let parts: Vec<FeatureMap<f64>> = (0..3).map(|_| random_map(&mut rng, shape)).collect();
    let r = random_map(&mut rng, shape);
    let sum = |ps: &[FeatureMap<f64>]| {
        let refs: Vec<&FeatureMap<f64>> = ps.iter().collect();
        eltwise_add(&refs).unwrap()
    };
    let grads = eltwise_add_backward(&r, parts.len());
    let mut c = Checker::new("eltwise_add", opts);
    for (p, g) in grads.iter().enumerate() {
        for i in pick(&mut rng, shape.len(), 16) {
            c.entry(g.data()[i], |d| {
                let mut ps = parts.clone();
                ps[p].data_mut()[i] += d;
                projection(&sum(&ps), &r)
            });
        }
    }
    c.finish()
}

fn loss_fixture(rng: &mut SplitMix64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let prob = (0..n).map(|_| rng.uniform(0.05, 0.95)).collect();
    let gt = (0..n).map(|_| if rng.bernoulli(0.2) { 1.0 } else { 0.0 }).collect();
    (prob, gt)
}

/// Checks a loss given as `prob, gt → (value, gradient)`.
fn check_loss(
    opts: &GradcheckOptions,
    name: &str,
    stream: u64,
    loss: impl Fn(&[f64], &[f64]) -> (f64, Vec<f64>),
) -> SuiteResult {
    let mut rng = SplitMix64::stream(opts.seed, stream);
    let (prob, gt) = loss_fixture(&mut rng, 64);
    let (_, grad) = loss(&prob, &gt);
    let mut c = Checker::new(name, opts);
    for i in 0..prob.len() {
        c.entry(grad[i], |d| {
            let mut p = prob.clone();
            p[i] += d;
            loss(&p, &gt).0
        });
    }
    c.finish()
}

pub fn check_losses(opts: &GradcheckOptions) -> Vec<SuiteResult> {
    let eps = 1e-6;
    let full = LossConfig {
        r: 1.9,
        use_iou: true,
        star: StarLoss::SmoothL1,
        epsilon: eps,
    };
    vec![
        check_loss(opts, "balanced_bce", 140, |p, g| balanced_bce(p, g, 1.9, eps).unwrap()),
        check_loss(opts, "iou_loss", 141, |p, g| iou_loss(p, g, eps).unwrap()),
        check_loss(opts, "smooth_l1", 142, |p, g| smooth_l1(p, g).unwrap()),
        check_loss(opts, "map_loss", 143, |p, g| {
            let (m, grad) = map_loss(p, g, &full).unwrap();
            (m.total, grad)
        }),
    ]
}

/// Network with random weights on a 16×16 input, differentiated through
/// the full five-map loss at `samples` randomly chosen parameters.
pub fn check_network(opts: &GradcheckOptions, samples: usize) -> Result<SuiteResult> {
    let mut rng = SplitMix64::stream(opts.seed, 150);
    let config = NetworkConfig {
        stage_widths: [4, 6, 8, 8],
        side_depth: 5,
        input_channels: 1,
    };
    let params = init_params::<f64>(&config, opts.seed)?;
    let mut model = Wein::new(config, params)?;
    // Small random biases keep pre-activations away from exact zeros.
    for k in model.params.kernels_mut() {
        k.bias.iter_mut().for_each(|b| *b = 0.1 * rng.normal());
    }
    let image = FeatureMap::from_fn(Shape::new(1, 1, 16, 16), |_, _, _, _| rng.next_f64());
    let gt = Mask::from_fn(16, 16, |y, x| y == 5 || x == 11);
    let loss_cfg = LossConfig {
        star: StarLoss::SmoothL1,
        ..LossConfig::default()
    };

    let out = model.forward(&image)?;
    let (_, grads) = total_loss(&out, &gt, &loss_cfg)?;
    model.params.zero_grad();
    model.backward(&grads)?;

    let mut flat: Vec<(usize, bool, usize)> = Vec::new();
    for (ki, k) in model.params.kernels().enumerate() {
        flat.extend((0..k.weight.len()).map(|i| (ki, true, i)));
        flat.extend((0..k.bias.len()).map(|i| (ki, false, i)));
    }
    let mut c = Checker::new("network 16x16", opts);
    let base = model.params.clone();
    for j in pick(&mut rng, flat.len(), samples) {
        let (ki, is_w, i) = flat[j];
        let k = base.kernels().nth(ki).expect("kernel index");
        let analytic = if is_w { k.grad_weight[i] } else { k.grad_bias[i] };
        c.entry(analytic, |d| {
            let mut p = base.clone();
            let kk = p.kernels_mut().nth(ki).expect("kernel index");
            if is_w {
                kk.weight[i] += d;
            } else {
                kk.bias[i] += d;
            }
            let mut m = Wein::new(config, p).expect("same layout");
            let out = m.forward(&image).expect("valid input");
            total_loss(&out, &gt, &loss_cfg).expect("valid loss").0.total
        });
    }
    Ok(c.finish())
}

/// Every suite, in a fixed order.
pub fn run_all(opts: &GradcheckOptions) -> Result<Vec<SuiteResult>> {
    let mut out = vec![
        check_conv(opts, 3, 1)?,
        check_conv(opts, 3, 2)?,
        check_conv(opts, 1, 1)?,
        check_relu(opts),
        check_sigmoid(opts),
        check_maxpool(opts),
        check_eltwise(opts),
    ];
    for f in [2, 4, 8] {
        out.push(check_upsample(opts, f));
    }
    out.extend(check_losses(opts));
    out.push(check_network(opts, 50)?);
    Ok(out)
}
