use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("universe must contain at least 2 factoids, got {0}")]
    UniverseTooSmall(usize),

    #[error("factoid index {index} out of range for universe of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("negative weight {weight} at factoid {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("weight at factoid {index} is not finite")]
    NonFiniteWeight { index: usize },

    #[error("all weights are zero")]
    ZeroMass,

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("universe mismatch: {left} vs {right} factoids")]
    UniverseMismatch { left: usize, right: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("training sample is empty")]
    EmptySample,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("training sample has zero posterior mass under every world instance")]
    InconsistentSample,

    #[error("{}: {source}", path.display())]
    ConfigSyntax {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("config hash mismatch: manifest has {expected}, config copy hashes to {actual}")]
    ManifestMismatch { expected: String, actual: String },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
