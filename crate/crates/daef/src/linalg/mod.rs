//! Dense SVD primitives: thin factorization without right singular vectors,
//! rank truncation, block-wise distributed merge, and deterministic sign
//! canonicalization.
//!
//! Everything here is a pure function over immutable values and safe to call
//! concurrently.

mod matrix;
mod svd;

pub use matrix::Matrix;
pub use svd::{canonical_sign, dsvd_merge, svd_thin, truncate, SvdThin};

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("rank {rank} outside valid range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("SVD did not converge within {0} sweeps")]
    NoConvergence(usize),
}
