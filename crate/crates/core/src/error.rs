use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("column {0:?} not found in header")]
    ColumnNotFound(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("split too short: {part} has {len} rows, need at least {need}")]
    SplitTooShort {
        part: &'static str,
        len: usize,
        need: usize,
    },
    #[error("channel {0:?} is constant")]
    ConstantChannel(String),
    #[error("series too short: {len} rows, need at least {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("train series too short: {len} rows, need at least {need}")]
    TrainTooShort { len: usize, need: usize },
    #[error("moving-average kernel must be odd, got {0}")]
    KernelEven(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("no training pairs")]
    NoPairs,
    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("synthetic series yields no training pairs")]
    NoSyntheticPairs,
    #[error("non-finite value during student unroll at step {step}")]
    NonFiniteDuringUnroll { step: usize },
    #[error("expert is degenerate: final parameters equal initial parameters")]
    DegenerateExpert,
    #[error("unroll tape is invalid: {0}")]
    TapeInvalid(String),
    #[error("expert {index}: {source}")]
    Expert {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("bad magic bytes in buffer file")]
    BadMagic,
    #[error("unsupported buffer format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("dataset fingerprint mismatch: buffer {expected}, dataset {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("buffer file is truncated")]
    TruncatedFile,
    #[error("consistency needs at least two experts")]
    SingleExpert,
    #[error("synthetic series too short for a single {block}-row block")]
    NoBlocks { block: usize },
    #[error("synthetic series became non-finite at epoch {epoch}")]
    NonFiniteSynthetic { epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration errors:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<crate::config::ConfigError>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
