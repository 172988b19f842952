use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed trace at line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] explo2_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
