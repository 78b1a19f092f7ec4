use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of a distribution or transform.
    #[error("domain error: {0}")]
    Domain(String),

    /// A record does not conform to the declared covariate schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A model or sampler configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array dimensions disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data violates a model requirement (e.g. an out-of-support count).
    #[error("data error: {0}")]
    Data(String),

    /// No finite starting point could be found.
    #[error("initialization failed: {0}")]
    Initialization(String),

    /// The sampler could not produce usable draws.
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// Two fits cannot be compared because they were computed on different data.
    #[error("comparison error: {0}")]
    Comparison(String),

    /// A named quantity does not exist.
    #[error("unknown {kind} `{name}`; available: {available}")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
