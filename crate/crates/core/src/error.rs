use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("observation spacing {obs_h} is not an integer multiple of the step {dt}")]
    Incommensurate { obs_h: f64, dt: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("estimate of {name} out of domain (raw value {raw})")]
    EstimateOutOfDomain { name: &'static str, raw: f64 },

    #[error("non-finite value in residual recursion at index {index}")]
    NumericOverflow { index: usize },

    #[error("simulation diverged at step {step}")]
    Instability { step: usize },

    #[error("ARMA specification is not causal")]
    NonCausal,

    #[error("no real invertible MA root: discriminant {discriminant}")]
    NoInvertibleRoot { discriminant: f64 },

    #[error("invalid AR roots: {0}")]
    InvalidRoots(String),

    #[error("forecast configurations do not match")]
    MismatchedConfig,

    #[error("insufficient data for {requested} pieces; at most {max_feasible} fit")]
    TooManyPieces { requested: usize, max_feasible: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
