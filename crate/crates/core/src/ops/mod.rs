//! Layer primitives with explicit backward passes.

mod activation;
mod conv;
mod eltwise;
mod pool;
mod upsample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use conv::{conv2d, conv2d_backward, ConvKernel};
pub use eltwise::{eltwise_add, eltwise_add_backward};
pub use pool::{maxpool2, maxpool2_backward};
pub use upsample::{bilinear_kernel_1d, upsample_bilinear, upsample_bilinear_backward, SUPPORTED_FACTORS};
