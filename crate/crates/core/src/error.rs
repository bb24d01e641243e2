use thiserror::Error;

use crate::netlist::Diagnostic;
use crate::sensitivity::TfhaOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unsupported device kind '{letter}'")]
    UnknownDeviceKind { line: usize, letter: char },

    #[error("line {line}: duplicate device name '{name}'")]
    DuplicateName { line: usize, name: String },

    #[error("circuit failed validation with {} diagnostic(s)", .0.len())]
    InvalidCircuit(Vec<Diagnostic>),

    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),

    #[error("unknown QoI target '{0}'")]
    UnknownTarget(String),

    #[error("state vector contains non-finite entries")]
    NonFiniteState,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "Newton iteration diverged at t = {time:e} s: residual {residual:e} after {iterations} iterations"
    )]
    NewtonDivergence {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("singular iteration matrix at t = {time:e} s")]
    SingularIterationMatrix { time: f64 },

    #[error("no periodic steady state after {periods} periods (last mismatch {last_mismatch:e})")]
    NoSteadyState {
        periods: usize,
        last_mismatch: f64,
        mismatch_history: Vec<f64>,
    },

    #[error("{k} harmonics requested but {samples} samples per period allow at most {limit}")]
    HarmonicOverflow {
        k: usize,
        samples: usize,
        limit: usize,
    },

    #[error("harmonic balance Newton did not converge (last residual {:e})", .residual_history.last().copied().unwrap_or(f64::NAN))]
    HbDivergence { residual_history: Vec<f64> },

    #[error("singular harmonic-balance Jacobian (condition estimate {condition_estimate:e})")]
    SingularJacobian { condition_estimate: f64 },

    #[error("fine sensitivity spectrum has zero norm")]
    ZeroFineNorm,

    #[error("harmonic refinement stopped at K = {k} without reaching the error tolerance (max estimate {max_estimate:e})")]
    NotConverged {
        k: usize,
        max_estimate: f64,
        outcome: Box<TfhaOutcome>,
    },
}
