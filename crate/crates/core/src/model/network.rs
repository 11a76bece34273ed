use crate::error::{Error, Result};
use crate::ops::{
    conv2d, conv2d_backward, eltwise_add, maxpool2, maxpool2_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    upsample_bilinear, upsample_bilinear_backward,
};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Shape};

use super::config::{check_input_size, NetworkConfig, NUM_STAGES};
use super::params::{init_params, ModelParams};

/// The four per-stage maps and the fused map, all at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SideOutputSet<T> {
    pub side_logits: [FeatureMap<T>; NUM_STAGES],
    pub side_probs: [FeatureMap<T>; NUM_STAGES],
    pub fused_logit: FeatureMap<T>,
    pub fused_prob: FeatureMap<T>,
}

impl<T: Scalar> SideOutputSet<T> {
    /// Side probabilities followed by the fused probability.
    pub fn prob_maps(&self) -> [&FeatureMap<T>; NUM_STAGES + 1] {
        [
            &self.side_probs[0],
            &self.side_probs[1],
            &self.side_probs[2],
            &self.side_probs[3],
            &self.fused_prob,
        ]
    }
}

/// Upstream gradients with respect to the five probability maps.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<T> {
    pub side: [FeatureMap<T>; NUM_STAGES],
    pub fused: FeatureMap<T>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    /// Input of each backbone conv.
    conv_inputs: Vec<FeatureMap<T>>,
    /// Post-ReLU output of each backbone conv.
    activations: Vec<FeatureMap<T>>,
    /// Per pooling transition: argmax and pre-pool shape.
    pools: Vec<(Vec<usize>, Shape)>,
    side_sums: Vec<FeatureMap<T>>,
    fusion_input: FeatureMap<T>,
    side_probs: Vec<FeatureMap<T>>,
    fused_prob: FeatureMap<T>,
}

/// Network parameters plus the activations saved by the last forward pass.
#[derive(Debug, Clone)]
pub struct Wein<T> {
    config: NetworkConfig,
    pub params: ModelParams<T>,
    cache: Option<Cache<T>>,
}

fn upsample_factor(stage: usize) -> usize {
    1 << stage
}

impl<T: Scalar> Wein<T> {
    pub fn new(config: NetworkConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        let expected = ModelParams::<T>::zeros(&config)?;
        let same_layout = expected.kernels().zip(params.kernels()).all(|(a, b)| {
            a.weight.len() == b.weight.len()
                && a.bias.len() == b.bias.len()
                && a.in_channels() == b.in_channels()
                && a.kernel_size() == b.kernel_size()
        }) && expected.kernels().count() == params.kernels().count();
        if !same_layout {
            return Err(Error::Config("parameters do not match network config".into()));
        }
        Ok(Wein {
            config,
            params,
            cache: None,
        })
    }

    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Runs all stages and saves what `backward` needs.
    pub fn forward(&mut self, image: &FeatureMap<T>) -> Result<SideOutputSet<T>> {
        let s = image.shape();
        if s.c != self.config.input_channels {
            return Err(Error::shape(
                "Wein::forward",
                format!("expected {} input channels, got {s}", self.config.input_channels),
            ));
        }
        check_input_size(s.h, s.w)?;
        self.cache = None;

        let layout = self.config.backbone_layout();
        let mut conv_inputs = Vec::with_capacity(layout.len());
        let mut activations: Vec<FeatureMap<T>> = Vec::with_capacity(layout.len());
        let mut pools = Vec::with_capacity(NUM_STAGES - 1);
        let mut side_sums = Vec::with_capacity(NUM_STAGES);
        let mut side_logits = Vec::with_capacity(NUM_STAGES);

        let mut x = image.clone();
        let mut k = 0;
        for stage in 0..NUM_STAGES {
            if stage > 0 {
                let (pooled, argmax) = maxpool2(&x)?;
                pools.push((argmax, x.shape()));
                x = pooled;
            }
            let mut side_sum: Option<FeatureMap<T>> = None;
            while k < layout.len() && layout[k].0 == stage {
                let a = relu(&conv2d(&x, &self.params.backbone[k], 1, 1)?);
                let side = conv2d(&a, &self.params.side[k], 1, 0)?;
                side_sum = Some(match side_sum {
                    None => side,
                    Some(acc) => eltwise_add(&[&acc, &side])?,
                });
                conv_inputs.push(std::mem::replace(&mut x, a.clone()));
                activations.push(a);
                k += 1;
            }
            let side_sum = side_sum.expect("every stage has at least one conv");
            let collapsed = conv2d(&side_sum, &self.params.collapse[stage], 1, 0)?;
            let logit = if stage == 0 {
                collapsed
            } else {
                upsample_bilinear(&collapsed, upsample_factor(stage))?
            };
            side_sums.push(side_sum);
            side_logits.push(logit);
        }

        let refs: Vec<&FeatureMap<T>> = side_logits.iter().collect();
        let fusion_input = FeatureMap::concat_channels(&refs)?;
        let fused_logit = conv2d(&fusion_input, &self.params.fusion, 1, 0)?;
        let fused_prob = sigmoid(&fused_logit);
        let side_probs: Vec<FeatureMap<T>> = side_logits.iter().map(sigmoid).collect();

        self.cache = Some(Cache {
            conv_inputs,
            activations,
            pools,
            side_sums,
            fusion_input,
            side_probs: side_probs.clone(),
            fused_prob: fused_prob.clone(),
        });

        Ok(SideOutputSet {
            side_logits: into_array(side_logits),
            side_probs: into_array(side_probs),
            fused_logit,
            fused_prob,
        })
    }

    /// Back-propagates gradients of the five probability maps and
    /// accumulates parameter gradients into `self.params`. Consumes the
    /// saved activations.
    pub fn backward(&mut self, grads: &OutputGrads<T>) -> Result<()> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let params = &mut self.params;

        let g_fused_logit = sigmoid_backward(&grads.fused, &cache.fused_prob)?;
        let g_fusion_input = conv2d_backward(&g_fused_logit, &cache.fusion_input, &mut params.fusion, 1, 0)?;
        let g_from_fusion = g_fusion_input.split_channels();

        let layout = self.config.backbone_layout();
        let mut g_act: Vec<Option<FeatureMap<T>>> = vec![None; layout.len()];

        for (stage, g_fusion) in g_from_fusion.iter().enumerate() {
            let mut g_logit = sigmoid_backward(&grads.side[stage], &cache.side_probs[stage])?;
            g_logit.add_assign(g_fusion)?;
            let g_collapsed = if stage == 0 {
                g_logit
            } else {
                upsample_bilinear_backward(&g_logit, upsample_factor(stage))?
            };
            let g_sum = conv2d_backward(&g_collapsed, &cache.side_sums[stage], &mut params.collapse[stage], 1, 0)?;
            for (k, _) in layout.iter().enumerate().filter(|(_, l)| l.0 == stage) {
                let g = conv2d_backward(&g_sum, &cache.activations[k], &mut params.side[k], 1, 0)?;
                accumulate(&mut g_act[k], g)?;
            }
        }

        for k in (0..layout.len()).rev() {
            let g = g_act[k].take().expect("every activation receives side gradient");
            let g_pre = relu_backward(&g, &cache.activations[k])?;
            let g_in = conv2d_backward(&g_pre, &cache.conv_inputs[k], &mut params.backbone[k], 1, 1)?;
            if k == 0 {
                break;
            }
            let stage = layout[k].0;
            let first_in_stage = layout[k - 1].0 != stage;
            let g_prev = if first_in_stage {
                let (argmax, shape) = &cache.pools[stage - 1];
                maxpool2_backward(&g_in, argmax, *shape)?
            } else {
                g_in
            };
            accumulate(&mut g_act[k - 1], g_prev)?;
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<FeatureMap<T>>, g: FeatureMap<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn into_array<T: std::fmt::Debug>(v: Vec<T>) -> [T; NUM_STAGES] {
    v.try_into().expect("one map per stage")
}
