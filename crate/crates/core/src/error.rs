use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss term, activation or gradient became NaN or infinite. The
    /// payload names the offending term or parameter path.
    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("world generation failed for seed {seed} after {attempts} attempts")]
    WorldGeneration { seed: u64, attempts: usize },

    #[error("point ({x:.3}, {y:.3}) is farther than {max_snap} m from any free grid cell")]
    Snap { x: f64, y: f64, max_snap: f64 },

    #[error("episode sampling failed: {0}")]
    Sampling(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(key: &str, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
