//! Core numerics for 3-D hyperspectral super-resolution.
//!
//! Everything here builds without `std`: 5-D tensors, a reverse-mode tape,
//! 3-D convolutions, the residual network, losses, metrics and the
//! in-memory training loop. File formats and the command line live in the
//! `ssr3d` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autograd;
pub mod conv;
pub mod cube;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod patches;
pub mod resample;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{BackwardOp, Tape, Var};
pub use conv::{conv3d, conv3d_transposed, Conv3dParams, ConvGeometry};
pub use cube::HsiCube;
pub use error::{Error, Result};
pub use loss::{loss, LossKind, LossValue};
pub use metrics::{evaluate, psnr, sam, ssim, MetricsReport, SpectralCube};
pub use model::{BlockKind, ParamStore, SsrnetConfig};
pub use optim::TrainConfig;
pub use tensor::{Shape5, Tensor5};
pub use train::{DataConfig, Trainer};
