//! Dense real linear algebra: row-major matrices, Cholesky with jitter escalation, Jacobi
//! eigendecomposition and a seeded random stream.

mod cholesky;
mod eig;
mod matrix;
mod rng;

pub use cholesky::{cholesky, cholesky_with_cap, solve_psd, CholeskyFactor, JITTER_CAP, JITTER_START};
pub use eig::{psd_sqrt, sym_eig, SymEig, EIG_TOLERANCE};
pub use matrix::{dot, Matrix};
pub use rng::{rng_stream, RngStream};
