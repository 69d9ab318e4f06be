//! Cover-tree accelerated inexact iterative projected gradient reconstruction.
//!
//! The crate solves dictionary-constrained linear inverse problems of the form
//!
//! ```text
//!   argmin_X ‖Y − A(X)‖²   s.t.   every row X_v ∈ cone(D)
//! ```
//!
//! where `D` is a dictionary of unit-norm temporal fingerprints. Three solvers
//! share one engine: one-shot template matching, iterative projection with an
//! exact brute-force matched filter, and the same iteration with the matched
//! filter replaced by a warm-started `(1+ε)` approximate nearest neighbour
//! search over a cover tree.
//!
//! Modules:
//! - [`covertree`]: metric index with exact and `(1+ε)` approximate search.
//! - [`dictionary`]: fingerprint generation, lookup tables and SVD compression.
//! - [`forward`]: acquisition operators (subsampled DFT, dense Gaussian) and
//!   embedding diagnostics.
//! - [`projection`]: per-voxel cone projections.
//! - [`solver`]: the iterative engine, step-size control and certificates.
//! - [`harness`]: phantoms, noise, metrics and the experiment runner.

pub mod covertree;
pub mod dictionary;
mod binio;
mod error;
pub mod exec;
pub mod forward;
pub mod harness;
pub mod linalg;
pub mod projection;
pub mod solver;

pub use error::{Error, Result};
pub use binio::Precision;
pub use exec::Exec;

pub use num_complex::Complex64;
