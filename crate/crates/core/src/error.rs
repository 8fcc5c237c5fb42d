use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("condition not satisfied: {0}")]
    Infeasible(String),
    #[error("empty sequence: {0}")]
    Empty(String),
    #[error("input contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
