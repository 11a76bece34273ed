//! SGD with momentum, weight decay and step learning-rate decay.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::rng::SplitMix64;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::losses::{predict_average, total_loss, LossConfig};
use crate::metrics::{score_image, MetricsReport, DEFAULT_RADIUS};
use crate::model::{init_params, Checkpoint, ModelParams, NetworkConfig, Wein};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Mask};

/// Learning rate for the wide network when started from pretrained weights.
pub const WIDE_LR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_gamma: f64,
    /// After each listed (1-based) epoch the rate is multiplied by `lr_gamma`.
    pub lr_step_epochs: Vec<usize>,
    pub epochs: usize,
    /// Samples whose gradients are summed before each step.
    pub batch: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Epoch interval for intermediate checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            momentum: 0.9,
            weight_decay: 2e-4,
            lr_gamma: 0.1,
            lr_step_epochs: vec![6],
            epochs: 8,
            batch: 1,
            seed: 0,
            loss: LossConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma.is_finite()) {
            return bad(format!("lr_gamma must be positive, got {}", self.lr_gamma));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        self.loss.validate()
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = self.lr_step_epochs.iter().filter(|&&s| s < epoch).count();
        self.lr * self.lr_gamma.powi(steps as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T> {
    pub velocity: ModelParams<T>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        Ok(SgdState {
            velocity: ModelParams::zeros(config)?,
        })
    }
}

/// `v ← μ·v + g + λ·w` (no decay on biases), then `w ← w − lr·v`, using the
/// gradients accumulated in `params`.
pub fn sgd_step<T: Scalar>(params: &mut ModelParams<T>, state: &mut SgdState<T>, sgd: &Sgd) {
    let lr = T::of(sgd.lr);
    let mu = T::of(sgd.momentum);
    let wd = T::of(sgd.weight_decay);
    for (k, v) in params.kernels_mut().zip(state.velocity.kernels_mut()) {
        for ((w, g), vel) in k.weight.iter_mut().zip(&k.grad_weight).zip(v.weight.iter_mut()) {
            *vel = mu * *vel + *g + wd * *w;
            *w -= lr * *vel;
        }
        for ((b, g), vel) in k.bias.iter_mut().zip(&k.grad_bias).zip(v.bias.iter_mut()) {
            *vel = mu * *vel + *g;
            *b -= lr * *vel;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub sample: String,
    pub bce: f64,
    pub iou: f64,
    pub star: f64,
    pub total: f64,
}

pub fn loss_log_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("epoch,sample,bce,iou,star,total\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.sample, r.bce, r.iou, r.star, r.total
        )
        .unwrap();
    }
    out
}

pub fn write_loss_log(path: &Path, records: &[LossRecord]) -> Result<()> {
    std::fs::write(path, loss_log_csv(records)).map_err(|e| Error::io(path, e))
}

/// Progress notifications from [`train_with`].
pub enum TrainEvent<'a> {
    EpochEnd { epoch: usize, lr: f64, mean_total: f64 },
    Checkpoint(&'a Checkpoint),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
}

impl TrainOutcome {
    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let rows: Vec<f64> = self.log.iter().filter(|r| r.epoch == epoch).map(|r| r.total).collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }
}

pub fn train(samples: &[Sample], net: &NetworkConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(samples, net, config, |_| Ok(()))
}

fn snapshot(
    net: &NetworkConfig,
    config: &TrainConfig,
    epoch: usize,
    model: &Wein<f32>,
    state: &SgdState<f32>,
) -> Checkpoint {
    Checkpoint {
        config: *net,
        seed: config.seed,
        epochs_completed: epoch as u32,
        params: model.params.clone(),
        velocity: Some(state.velocity.clone()),
    }
}

/// Trains from `init_params(config.seed)`, visiting samples in a fresh
/// seeded order each epoch.
pub fn train_with(
    samples: &[Sample],
    net: &NetworkConfig,
    config: &TrainConfig,
    mut on_event: impl FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut model = Wein::<f32>::new(*net, init_params(net, config.seed)?)?;
    let mut state = SgdState::new(net)?;
    let mut log = Vec::with_capacity(samples.len() * config.epochs);

    for epoch in 1..=config.epochs {
        let sgd = Sgd {
            lr: config.lr_at(epoch),
            momentum: config.momentum,
            weight_decay: config.weight_decay,
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        SplitMix64::stream(config.seed, epoch as u64).shuffle(&mut order);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch) {
            model.params.zero_grad();
            for &i in batch {
                let s = &samples[i];
                let out = model.forward(&s.image)?;
                let (loss, grads) = total_loss(&out, &s.gt, &config.loss)?;
                if !loss.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        sample: i,
                        loss: loss.total,
                    });
                }
                model.backward(&grads)?;
                let sum = loss.summed();
                log.push(LossRecord {
                    epoch,
                    sample: s.id.clone(),
                    bce: sum.bce,
                    iou: sum.iou,
                    star: sum.star,
                    total: loss.total,
                });
                epoch_sum += loss.total;
            }
            sgd_step(&mut model.params, &mut state, &sgd);
        }
        on_event(TrainEvent::EpochEnd {
            epoch,
            lr: sgd.lr,
            mean_total: epoch_sum / samples.len() as f64,
        })?;
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < config.epochs {
            on_event(TrainEvent::Checkpoint(&snapshot(net, config, epoch, &model, &state)))?;
        }
    }
    model.params.zero_grad();
    let checkpoint = snapshot(net, config, config.epochs, &model, &state);
    Ok(TrainOutcome { checkpoint, log })
}

/// Averaged five-map probability for one image.
pub fn predict(model: &mut Wein<f32>, image: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
    let out = model.forward(image)?;
    Ok(predict_average(&out))
}

/// Binarises the averaged prediction at `threshold` (strictly above) and
/// scores it; SSIM uses the probability map itself.
pub fn evaluate(checkpoint: &Checkpoint, samples: &[Sample], threshold: f64) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut model = Wein::new(checkpoint.config, checkpoint.params.clone())?;
    let per_image = samples
        .iter()
        .map(|s| {
            let avg = predict(&mut model, &s.image)?;
            let shape = avg.shape();
            let pred = Mask::from_threshold(shape.h, shape.w, avg.plane(0, 0), threshold as f32);
            score_image(&s.id, &pred, avg.plane(0, 0), &s.gt)
        })
        .collect::<Result<Vec<_>>>()?;
    let config = serde_json::json!({
        "threshold": threshold,
        "tolerance_radius": DEFAULT_RADIUS,
        "network": checkpoint.config,
        "seed": checkpoint.seed,
        "epochs_completed": checkpoint.epochs_completed,
    });
    Ok(MetricsReport::new(per_image, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_steps_after_listed_epochs() {
        let c = TrainConfig {
            lr: 1.0,
            lr_gamma: 0.1,
            lr_step_epochs: vec![2, 4],
            ..TrainConfig::default()
        };
        let got: Vec<f64> = (1..=5).map(|e| c.lr_at(e)).collect();
        let want = [1.0, 1.0, 0.1, 0.1, 0.010000000000000002];
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..ok.clone() },
            TrainConfig {
                momentum: 1.0,
                ..ok.clone()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..ok.clone()
            },
            TrainConfig { batch: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn csv_layout() {
        let rec = LossRecord {
            epoch: 1,
            sample: "0003".into(),
            bce: 1.5,
            iou: 0.25,
            star: 0.0,
            total: 1.75,
        };
        assert_eq!(
            loss_log_csv(&[rec]),
            "epoch,sample,bce,iou,star,total\n1,0003,1.5,0.25,0,1.75\n"
        );
    }
}
