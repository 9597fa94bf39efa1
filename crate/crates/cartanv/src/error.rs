use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum CartanError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("fundamental tensor not positive definite at the evaluated point")]
    NotPositiveDefinite,

    #[error("ill-conditioned tensor: condition estimate {0:.3e} exceeds guard")]
    IllConditioned(f64),

    #[error("homogeneity violation: {0}")]
    HomogeneityViolation(String),

    #[error("adapted basis degenerate: |p_n| = {pn_abs:.3e} below floor {floor:.3e}")]
    AdaptedBasisDegenerate { pn_abs: f64, floor: f64 },

    #[error("h-block singular: condition estimate {0:.3e}")]
    HBlockSingular(f64),

    #[error("unknown metric label: {0}")]
    UnknownMetric(String),

    #[error("sampling exhausted: accepted {accepted} of {requested} after {candidates} candidates")]
    SamplingExhausted {
        requested: usize,
        accepted: usize,
        candidates: usize,
    },

    #[error("expression parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown check name: {0}")]
    UnknownCheck(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CartanError>;
