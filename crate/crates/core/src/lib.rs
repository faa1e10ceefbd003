//! Second-order Dirichlet problems on finite time-scale realizations.
//!
//! The crate is organized bottom-up:
//!
//! * [`timescale`]: finite point sets with jump operators and graininess.
//! * [`calculus`]: delta derivatives, σ-shifts and delta integrals of grid
//!   functions.
//! * [`green`]: the Green's function of `−x^ΔΔ = 0` with Dirichlet data, the
//!   affine boundary interpolant and the envelope weight `e(t)`.
//! * [`model`]: nonlinearities (expression parser included) and the
//!   Dirichlet system `−x^ΔΔ(t) = f(t, x^σ(t))`.
//! * [`solver`]: truncation, regularized right-hand side, the fixed-point
//!   operator and the solution strategies.
//! * [`criteria`]: hypothesis checkers, improper-integral classification and
//!   the explicit lower/upper solution constructions.

pub mod calculus;
pub mod criteria;
mod error;
pub mod green;
pub mod model;
pub mod solver;
pub mod timescale;

pub use calculus::GridFunction;
pub use error::{Error, Result};
pub use model::{DirichletProblem, ExpressionTree, Nonlinearity, ProblemMode};
pub use timescale::{ScaleKind, TimeScale};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
