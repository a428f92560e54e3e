//! Finite-dimensional quantum measurements and the semidefinite programs that
//! decide when one measurement can be performed without disturbing another.
//!
//! The crate models POVMs, instruments, and channels over complex Hermitian
//! matrices ([`qmat`], [`measurement`]), assembles and solves the associated
//! SDPs ([`sdpcore`]), classifies pairwise compatibility ([`compat`]),
//! evaluates sequential-measurement statistics and the no-signaling-in-time
//! and arrow-of-time conditions ([`sequence`]), computes disturbance and
//! macrorealism measures ([`mrmeasure`]), applies the free operations that
//! cannot increase them ([`freeops`]), and ships a catalog of reference
//! constructions with machine-checked claims ([`catalog`]).

pub mod catalog;
pub mod compat;
pub mod freeops;
pub mod measurement;
pub mod mrmeasure;
pub mod qmat;
pub mod random;
pub mod sdpcore;
pub mod sequence;
pub mod tol;

mod dsdp;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input violates a documented precondition (bad matrix, bad kernel, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Operands have incompatible dimensions or outcome counts.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    /// The conic solver failed; the message carries its diagnostics.
    #[error("solver failure: {0}")]
    SolverFailure(String),
    /// An internal consistency check failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
