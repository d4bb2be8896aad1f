//! Numerical laboratory for reflected generalized backward stochastic
//! differential equations with right-continuous obstacles, realized exactly
//! on finite scenario trees.
//!
//! The crate is organized around the lifecycle of one experiment:
//!
//! * [`scenario`] builds the finite filtered probability model (Brownian
//!   surrogate, compensated jump marks, optional extra orthogonal factor,
//!   increasing clock `A`) and provides exact conditional expectation and
//!   martingale decomposition;
//! * [`model`] houses the problem data `(ξ, f, g, A, L/U)` and verifies the
//!   structural assumptions on the coefficients numerically;
//! * [`gbsde`] solves the unreflected equation backward with an implicit
//!   monotone step and exposes the fixed-point (Picard) map;
//! * [`reflected`] adds the obstacle: penalization schemes, the auxiliary
//!   linear-drift equation with its discounted representation, a direct
//!   reflected solver that serves as the exact oracle, the decomposition of
//!   the pushing process into continuous and jump parts, and the
//!   minimality (Skorokhod) residual;
//! * [`stopping`] characterizes the reflected state process as an optimal
//!   stopping value: Snell recursion, exhaustive policy enumeration,
//!   approximate hitting policies, and representation checks;
//! * [`analysis`] provides the exponentially weighted norms, a priori
//!   estimate monitors, contraction-rate measurement, and the comparison
//!   harness.

// Validation checks are written as `!(x <= bound)` on purpose: a NaN input
// must count as a violation, which the un-negated form would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod gbsde;
pub mod model;
pub mod reflected;
pub mod scenario;
pub mod stopping;

pub use error::{Error, Result};
