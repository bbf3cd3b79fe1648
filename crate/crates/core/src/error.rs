use thiserror::Error;

use crate::lattice::Site;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("site {0} is not in the region")]
    SiteOutsideRegion(Site),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("solve residual {residual:.3e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("distribution fails regularity: {0}")]
    Regularity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("too many failed samples: {failed} of {total} ({detail})")]
    SampleFailures {
        failed: usize,
        total: usize,
        detail: String,
    },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
