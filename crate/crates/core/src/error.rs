use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two tensors disagree along a named axis.
    #[error("{op}: dimension mismatch on axis `{axis}` (expected {expected}, found {found})")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    /// A kernel/stride/padding combination that yields no valid output.
    #[error("{op}: invalid geometry: {detail}")]
    Geometry { op: &'static str, detail: String },

    /// An API contract was violated by the caller.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A metric has no defined value for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A loss or gradient turned NaN/inf.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
}

pub type Result<T> = core::result::Result<T, Error>;
