use std::path::PathBuf;

/// Failures of the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad flags or config file. Exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Core(#[from] ssr3d_core::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    /// A run failed after writing a recovery artifact.
    #[error("{message}")]
    Aborted { message: String },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Problems inside an HSC or SSRC file, with the byte offset they were found at.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?} at byte 0 (expected {expected:?})")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} at byte {offset}")]
    Version { offset: u64, found: u16 },
    #[error("{what} = {value} at byte {offset} exceeds the limit of {limit}")]
    DimOverflow {
        offset: u64,
        what: &'static str,
        value: u64,
        limit: u64,
    },
    #[error("{what} = 0 at byte {offset}")]
    ZeroDim { offset: u64, what: &'static str },
    #[error("file truncated at byte {offset}: needed {needed} more bytes for {what}")]
    Truncated {
        offset: u64,
        needed: u64,
        what: &'static str,
    },
    #[error("checksum mismatch at byte {offset}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { offset: u64, stored: u32, computed: u32 },
    #[error("{extra} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("non-finite value at byte {offset}")]
    NonFinite { offset: u64 },
    #[error("invalid field at byte {offset}: {detail}")]
    Invalid { offset: u64, detail: String },
}

pub type AppResult<T> = Result<T, AppError>;
