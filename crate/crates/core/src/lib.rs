//! Weak-edge identification network (WEIN) for thin, low-contrast edges
//! such as ocean fronts.
//!
//! The crate bundles a small CPU convolution engine with hand-written
//! backward passes ([`ops`]), the four-stage deeply supervised network
//! ([`model`]), its class-balanced loss ([`losses`]), tolerance-band
//! scoring ([`metrics`]), Sobel and Canny reference detectors
//! ([`baselines`]), a seeded synthetic corpus ([`data`]) and an SGD
//! training loop ([`trainer`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod baselines;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{FeatureMap, Mask, Shape};

pub type FeatureMap32 = FeatureMap<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type ConvKernel32 = ops::ConvKernel<f32>;
pub type ConvKernel64 = ops::ConvKernel<f64>;
pub type Wein32 = model::Wein<f32>;
pub type Wein64 = model::Wein<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
