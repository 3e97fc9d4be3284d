//! Joint completion and subspace clustering of partially observed matrices.
//!
//! Columns of a `D x N` matrix are assumed to lie in a union of
//! low-dimensional subspaces. The missing entries are estimated by
//! alternating a sparse self-expressive fit on the observed entries with
//! re-imputation from that fit, and the final coefficients drive a spectral
//! segmentation of the columns.

pub mod alternation;
pub mod error;
pub mod harness;
pub mod init;
pub mod masked;
pub mod method;
pub mod metrics;
pub mod registry;
pub mod selfexpr;
pub mod spectral;
pub mod synth;

pub use error::{ErrorClass, Result, SssaError};
pub use masked::ObservedMatrix;
