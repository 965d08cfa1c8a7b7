//! Matrix-free gauge-dual solver for low-rank spectral optimization.
//!
//! The solver targets trace minimization over the PSD cone,
//!
//! ```text
//! minimize trace(X)  subject to  ||b - A(X)||_2 <= eps,  X >= 0,
//! ```
//!
//! and, through a Hermitian embedding, nuclear-norm minimization over
//! rectangular complex matrices. Rather than working with `X` directly it
//! minimizes the rightmost eigenvalue `lambda_1(A*y)` over the dual-feasible
//! set `{y : <b, y> - eps ||y|| >= 1}` with a projected subgradient method,
//! and recovers low-rank primal factors from the leading eigenvectors.
//!
//! Module map:
//!
//! - [`operator`]: matrix-free measurement maps, counters, asymmetric embedding
//! - [`eig`]: thick-restart Lanczos for rightmost eigenpairs, generalized variant
//! - [`dual`]: dual objective, subgradient, projection, step rules, gap
//! - [`recover`]: primal recovery, primal/dual refinement, the solve loop
//! - [`apps`]: phase-retrieval and blind-deconvolution operators, Haar, weights
//! - [`harness`]: instance generation, metrics, experiments, property checks

pub mod apps;
pub mod dual;
pub mod eig;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod operator;
pub mod recover;

pub use error::{GaugeError, Result};
pub use linalg::{CMat, CVec, RVec, C64};
