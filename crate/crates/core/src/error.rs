use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("LED and user are co-located at ({x}, {y}, {z})")]
    ZeroDistance { x: f64, y: f64, z: f64 },

    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("total power must be positive to compute energy efficiency, got {0}")]
    NonPositivePower(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode already terminated after {0} steps; call reset")]
    EpisodeTerminated(usize),

    #[error("non-finite gradient in {0} update")]
    NonFiniteGradient(&'static str),

    #[error("grid of {size} evaluations exceeds the cap of {cap}")]
    GridCapExceeded { size: u128, cap: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
