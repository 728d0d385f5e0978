use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("propagation diverged at x = {x}")]
    Divergence { x: f64 },

    #[error("delta at x = {position} does not sit on the integration grid")]
    GridMisaligned { position: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("potential has a pole at x = {x}")]
    Pole { x: f64 },

    #[error("smooth part evaluated exactly at the delta at x = {x}")]
    AtDelta { x: f64 },

    #[error("singular Jacobian in Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("line search could not reduce the residual (residual {residual:e})")]
    LineSearchFailed { residual: f64 },

    #[error("wavefunction has a node near x = {position} (|phi| = {magnitude:e})")]
    NodalState { position: f64, magnitude: f64 },

    #[error("shooting guess has vanishing initial data")]
    DegenerateGuess,

    #[error("continuation gap at parameter value {parameter}")]
    ContinuationGap { parameter: f64 },

    #[error("kappa = {kappa} is not an eigenvalue (|char_fn| = {residual:e})")]
    NotAnEigenvalue { kappa: Complex64, residual: f64 },

    #[error("jump matching is degenerate at x = {position}")]
    DegenerateJump { position: f64 },

    #[error("target |E0| = {0} is outside the achievable range")]
    TargetOutOfRange(f64),

    #[error("exceptional point search failed: {0}")]
    ExceptionalPoint(String),

    #[error("exceptional point estimates disagree: oracle {oracle}, shooting {shooting}")]
    EpDisagreement { oracle: f64, shooting: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
