//! Error type shared by the simulation, fitting and pricing modules.

use thiserror::Error;

/// Failure modes surfaced by the engine.
///
/// `InvalidInput` is a precondition violation caught up front (bad shapes,
/// non-positive spots, unsorted grids, inconsistent configs). `Numerical` is
/// a breakdown detected mid-computation, such as a non-finite training loss
/// or a linear solve that failed; it carries enough context to locate the
/// offending stage.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;

pub(crate) fn invalid(msg: impl Into<String>) -> EngineError {
    EngineError::InvalidInput(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> EngineError {
    EngineError::Numerical(msg.into())
}
