use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty class")]
    EmptyClass,

    #[error("invalid feature: {0}")]
    InvalidFeature(String),

    #[error("insufficient rows to standardize: need at least 2, got {0}")]
    InsufficientRows(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least 2 class models, got {0}")]
    TooFewModels(usize),

    #[error("undefined AUROC: labels contain a single class")]
    UndefinedAuroc,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-shot requires text mean")]
    ZeroShotRequiresTextMean,

    #[error("text statistics predictor required for variant {0}")]
    MissingPredictor(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config error: {0}")]
    Settings(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line driver.
    ///
    /// 2 = configuration, 3 = data, 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Settings(_) | Error::OutOfRange { .. } => 2,
            Error::InvalidArgument(_) | Error::MissingPredictor(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
