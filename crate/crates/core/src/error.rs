use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("state is not on the manifold: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotOnManifold { residual: f64, tol: f64 },

    #[error("ill-conditioned statistics: {0}")]
    IllConditioned(String),

    #[error("divergence at step {step}: loss became non-finite")]
    Diverged {
        step: u64,
        /// Last finite parameter state before divergence.
        last: Box<crate::net::UnitLayerNet>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
