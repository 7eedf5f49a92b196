//! Numerical laboratory for C⁰-rigidity of the Poisson bracket.
//!
//! Modules, bottom-up:
//!
//! - [`fieldexpr`]: symbolic scalar fields, parser, grid sup-norms.
//! - [`bracketops`]: Poisson brackets, Hamiltonian vector fields and the
//!   invariants built from iterated brackets.
//! - [`hamflow`]: implicit-midpoint flows, slab sets and the displacement test.
//! - [`perturber`]: the rate-saturating local perturbation and the staircase
//!   counterexample.
//! - [`trigfact`]: trigonometric polynomials and Fejér–Riesz factorization.
//! - [`ratemeter`]: rate tables, theoretical bands and bounds.
//! - [`scenarios`]: the built-in example catalog.
//! - [`exec`]: parallel/sequential sweep helpers.

pub mod bracketops;
pub mod exec;
pub mod fieldexpr;
pub mod hamflow;
pub mod perturber;
pub mod ratemeter;
pub mod scenarios;
pub mod trigfact;

pub use exec::Exec;
pub use fieldexpr::{parse_field, Chart, ExprError, FieldExpr, GridBox};
