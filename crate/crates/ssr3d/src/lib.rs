//! File formats, runners and the command line around `ssr3d-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod hsc;
pub mod outputs;
pub mod run;
pub mod settings;

pub use error::{AppError, AppResult, FormatError};
