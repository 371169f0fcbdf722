use alloc::boxed::Box;
use alloc::string::String;

use crate::tstep::KktReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Inconsistent dimensions or invalid settings.
    #[error("configuration error: {0}")]
    Config(String),
    /// Empty or otherwise unusable input.
    #[error("input error: {0}")]
    Input(String),
    /// A partial score evaluated to a non-finite value.
    #[error("non-finite value for sub-likelihood {score} at observation {observation}")]
    Evaluation { observation: usize, score: usize },
    /// Invalid model or covariance settings.
    #[error("model error: {0}")]
    Model(String),
    /// Argument outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),
    /// A matrix that must be inverted is (numerically) singular.
    #[error("singular matrix: {0}")]
    Singular(String),
    /// Fixed-lambda solver failed to certify a solution.
    #[error("T-Step solver did not converge after {sweeps} sweeps (active violation {:.3e}, inactive violation {:.3e})", report.max_active_violation, report.max_inactive_violation)]
    Convergence { sweeps: usize, report: KktReport },
    /// Homotopy path failure.
    #[error("path error: {0}")]
    Path(String),
    /// Newton iteration or one-step update failure.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// Preliminary Newton iteration exhausted its budget.
    #[error("preliminary estimate did not converge: score norm {score_norm:.3e} after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        last: alloc::vec::Vec<f64>,
        score_norm: f64,
    },
    /// Input has no information (zero trace, zero weights).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Error raised inside one stage of the fitting pipeline.
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
