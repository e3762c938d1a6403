//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model structure: {0}")]
    Model(String),
    #[error("infinite diameter")]
    InfiniteDiameter,
    #[error("degenerate chain: {0}")]
    DegenerateChain(String),
    #[error("instance too large for enumeration: {0} deterministic policies")]
    EnumerationGuard(u128),
    #[error("contraction of non-closed set")]
    NotClosed,
    #[error("cannot modify an optimal pair: {0}")]
    OptimalPair(String),
    #[error("not optimally recurrent")]
    NotOptimallyRecurrent,
    #[error("interior condition violated")]
    InteriorCondition,
    #[error("mismatched pair spaces")]
    PairSpaceMismatch,
    #[error("lp solver failure: {0}")]
    Lp(String),
    #[error("did not converge within {0} rounds")]
    NotConverged(usize),
    #[error("precondition: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
