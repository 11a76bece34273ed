use crate::data::rng::SplitMix64;
use crate::error::Result;
use crate::ops::ConvKernel;
use crate::scalar::Scalar;

use super::config::{NetworkConfig, NUM_STAGES};

/// Every convolution of the network, in checkpoint order: ten backbone 3×3
/// convs, ten side 1×1 convs, four collapse 1×1 convs, one fusion conv.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub backbone: Vec<ConvKernel<T>>,
    pub side: Vec<ConvKernel<T>>,
    pub collapse: Vec<ConvKernel<T>>,
    pub fusion: ConvKernel<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let d = config.side_depth;
        let layout = config.backbone_layout();
        let backbone = layout
            .iter()
            .map(|&(_, cin, cout)| ConvKernel::zeros(cout, cin, 3))
            .collect::<Result<Vec<_>>>()?;
        let side = layout
            .iter()
            .map(|&(_, _, cout)| ConvKernel::zeros(d, cout, 1))
            .collect::<Result<Vec<_>>>()?;
        let collapse = (0..NUM_STAGES)
            .map(|_| ConvKernel::zeros(1, d, 1))
            .collect::<Result<Vec<_>>>()?;
        let fusion = ConvKernel::zeros(1, NUM_STAGES, 1)?;
        Ok(ModelParams {
            backbone,
            side,
            collapse,
            fusion,
        })
    }

    pub fn kernels(&self) -> impl Iterator<Item = &ConvKernel<T>> {
        self.backbone
            .iter()
            .chain(&self.side)
            .chain(&self.collapse)
            .chain(std::iter::once(&self.fusion))
    }

    pub fn kernels_mut(&mut self) -> impl Iterator<Item = &mut ConvKernel<T>> {
        self.backbone
            .iter_mut()
            .chain(self.side.iter_mut())
            .chain(self.collapse.iter_mut())
            .chain(std::iter::once(&mut self.fusion))
    }

    pub fn param_count(&self) -> usize {
        self.kernels().map(ConvKernel::param_count).sum()
    }

    pub fn zero_grad(&mut self) {
        self.kernels_mut().for_each(ConvKernel::zero_grad);
    }

    /// Sum of squared weights and biases.
    pub fn squared_norm(&self) -> f64 {
        self.kernels()
            .flat_map(|k| k.weight.iter().chain(&k.bias))
            .map(|v| v.as_f64().powi(2))
            .sum()
    }

    /// All gradient entries, weights then biases per kernel.
    pub fn gradients(&self) -> Vec<T> {
        self.kernels()
            .flat_map(|k| k.grad_weight.iter().chain(&k.grad_bias).copied())
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            backbone: self.backbone.iter().map(ConvKernel::cast).collect(),
            side: self.side.iter().map(ConvKernel::cast).collect(),
            collapse: self.collapse.iter().map(ConvKernel::cast).collect(),
            fusion: self.fusion.cast(),
        }
    }
}

/// He-normal weights `N(0, 2/fan_in)` for backbone, side and collapse convs
/// drawn in checkpoint order from one seeded stream; zero biases; fusion
/// weights 0.25 so the fused map starts as the mean of the side logits.
pub fn init_params<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<ModelParams<T>> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = SplitMix64::new(seed);
    let random = params
        .backbone
        .iter_mut()
        .chain(params.side.iter_mut())
        .chain(params.collapse.iter_mut());
    for kernel in random {
        let (kh, kw) = kernel.kernel_size();
        let fan_in = kernel.in_channels() * kh * kw;
        let std = (2.0 / fan_in as f64).sqrt();
        for w in kernel.weight.iter_mut() {
            *w = T::of(std * rng.normal());
        }
    }
    params.fusion.weight.iter_mut().for_each(|w| *w = T::of(0.25));
    Ok(params)
}
