use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("parameter `{name}` out of range: {detail}")]
    OutOfRange { name: &'static str, detail: String },
    #[error("initial data not resolvable: {0}")]
    Unresolvable(String),
    #[error("kernel is singular at the origin")]
    SingularPoint,
    #[error("integration failure at t = {t}: {detail}")]
    IntegrationFailure { t: f64, detail: String },
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error("empty search set")]
    EmptySearch,
    #[error("initial data has negative mass {0:e}")]
    NegativeData(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange {
            name,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
