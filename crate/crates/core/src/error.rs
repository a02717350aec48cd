use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("step size violates {bound}: {detail}")]
    StepSize { bound: &'static str, detail: String },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular reversal at node {node} (x = {x}): posterior {posterior:e} below floor")]
    SingularReversal { node: usize, x: f64, posterior: f64 },

    #[error("nodal state: density vanishes at interior node {node} (x = {x})")]
    NodalState { node: usize, x: f64 },

    #[error("phase aliasing between nodes {node} and {next}: jump {jump:.4} rad, grid too coarse")]
    Aliasing { node: usize, next: usize, jump: f64 },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn density(msg: impl Into<String>) -> Self {
        Error::InvalidDensity(msg.into())
    }
}
