//! Capsule-based single-image super-resolution.
//!
//! The crate is organized in layers:
//!
//! * [`tensor`] / [`ops`] / [`tape`] — a dense rank-4 tensor, the numeric
//!   kernels over it, and a reverse-mode gradient tape tying them together.
//! * [`nn`] / [`capsules`] — weight-normalized convolution layers and the
//!   capsule machinery (squash, convolutional capsules, residual dense
//!   capsule blocks).
//! * [`model`] — the full super-resolution network: initial convolution,
//!   a stack of residual dense capsule blocks, trailing convolution with a
//!   global residual, and a sub-pixel upsampling tail.
//! * [`losses`] / [`metrics`] — the training objectives (L1, SSIM, MS-SSIM,
//!   mixes, the general robust loss, edge and region-weighted losses) and
//!   the evaluation measures (PSNR, SSIM, MS-SSIM, 3-component variants).
//! * [`data`] / [`train`] / [`config`] — image IO with bicubic degradation,
//!   the Adam training loop, and the flat key-value run configuration.
//!
//! Everything numeric is generic over the scalar type through [`Scalar`];
//! training runs in `f32`, gradient checks and evaluation in `f64`.

pub mod capsules;
pub mod check;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape4, Tensor4};

/// Single-precision tensor, the training default.
pub type TensorF = Tensor4<f32>;
/// Double-precision tensor, used by gradient checks and evaluation.
pub type TensorD = Tensor4<f64>;
