use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rows violate a structural precondition (ordering, duplicate ids,
    /// references to unknown posts, timestamps before creation, ...).
    #[error("data quality: {0}")]
    DataQuality(String),

    /// A configuration value is outside its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A stage cannot produce a result for structural reasons (empty donor
    /// pool, no usable pre-treatment window, degenerate design matrix, ...).
    #[error("infeasible: {0}")]
    Infeasible(String),
}
