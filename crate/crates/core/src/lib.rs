//! Numerical laboratory for the surface Maryland model
//! `H = Δ + λ δ(x) tan π(α·n + θ)` on `ℤ^d × ℤ` and on the half space `x ≥ 0`.
//!
//! * [`model`]: parameters, the quasiperiodic potential, phase conditions.
//! * [`green`]: free Green functions and their momentum symbols.
//! * [`reduction`]: the surface operator `T`, the Cayley symbol and rotation number.
//! * [`diophantine`]: continued fractions, `β(α)` and Liouville constructions.
//! * [`ergodic`]: Birkhoff-sum deviations of analytic observables.
//! * [`spectrum`]: finite-volume oracle, eigenvalue prediction and cover sums.
//! * [`cli`]: the `smm` command line.

// NaN-rejecting `!(a > b)` guards and index loops in the band kernels are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod cli;
pub mod diophantine;
pub mod ergodic;
pub mod error;
pub mod green;
pub mod io;
pub mod model;
pub mod reduction;
pub mod spectrum;
pub mod stats;

pub use error::{Result, SmmError};
pub use green::{Energy, SymbolGrid};
pub use model::{Geometry, LatticeSite, ModelParams};
