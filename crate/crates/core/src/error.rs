use thiserror::Error;

use crate::simplex::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max |a - a†| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("outcome space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("outcome space is not a product space")]
    NotProductSpace,

    #[error("unknown outcome label {0}")]
    UnknownLabel(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid outcome space: {0}")]
    InvalidSpace(String),

    #[error("invalid Markov kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("{outcomes} product outcomes exceed the cap of {cap}")]
    ExplosionCap { outcomes: u128, cap: usize },

    #[error("quadrature grid too coarse: rest effect has eigenvalue {min_eigenvalue:e}")]
    GridDeficient { min_eigenvalue: f64 },

    #[error("POVM is not conserved by the instrument (forward residual {forward:e}, backward residual {backward:e})")]
    NotConserved { forward: f64, backward: f64 },

    #[error("POVMs are not equivalent: {0}")]
    NotEquivalent(String),

    #[error("trajectory hit a dead end at step {step}: branch probabilities sum to {total:e}")]
    DeadEnd { step: usize, total: f64 },

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("malformed data: {0}")]
    Format(String),
}
