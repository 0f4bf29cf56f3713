use thiserror::Error;

/// Errors produced by the location pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("insufficient sensors: need at least {needed}, got {got}")]
    InsufficientSensors { needed: usize, got: usize },

    #[error("degenerate sensor geometry (condition estimate {condition:.3e})")]
    DegenerateGeometry { condition: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("ambiguous solution: two roots with comparable residuals ({first:.3e} s, {second:.3e} s)")]
    AmbiguousSolution { first: f64, second: f64 },

    #[error("no mutually consistent pulse set")]
    NoConsistentSet,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("audio: {0}")]
    Audio(String),
}

pub type Result<T> = std::result::Result<T, Error>;
