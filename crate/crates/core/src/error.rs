use thiserror::Error;

use crate::orlp::SolverReport;

/// Errors raised by the learner, the simulator and the offline oracle.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or layering do not agree with the layout.
    #[error("structural error: {0}")]
    Structural(String),

    /// A scalar parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("divergence undefined: reference is zero at edge {edge} where the argument is {value}")]
    DivergenceUndefined { edge: usize, value: f64 },

    /// The projection did not reach its tolerance within the iteration cap.
    #[error(
        "projection solver failed after {} iterations (gradient {:.3e}, residual {:.3e})",
        .0.iterations, .0.gradient_norm, .0.residual
    )]
    SolverFailure(Box<SolverReport>),

    /// The linear program has no feasible point; `certificate` is a Farkas vector
    /// over the equality rows followed by the inequality rows.
    #[error("infeasible: {reason}")]
    Infeasible { reason: String, certificate: Vec<f64> },

    #[error("linear program is unbounded")]
    Unbounded,

    /// Flat key=value parsing failed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
