//! Hamiltonian flows and the displacement argument.
//!
//! [`integrate`] runs the implicit midpoint rule with box-exit and blow-up
//! detection. [`SlabSet`] samples the thin sets `W_{r,α}` that the proofs
//! displace, and the remaining functions evaluate the Hofer-norm upper bound
//! and the displacement-energy lower bounds that are compared against it.

mod integrate;
mod slab;

use thiserror::Error;

use crate::bracketops::BracketError;
use crate::fieldexpr::ExprError;

pub use integrate::{
    integrate, symplectic_defect, transport_set, Flow, FlowOptions, Method, Status, Trajectory,
    Transport,
};
pub use slab::{
    displacement_check, energy_lower_product, energy_lower_slab, halton, hofer_upper,
    Displacement, DisplacementInequality, PlanarDomain, SlabSet, SLAB_KAPPA,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("state of dimension {got} for a flow of dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial point lies outside the box")]
    StartOutsideBox,
    #[error("implicit solve did not converge at t = {t} (residual {residual:e})")]
    NonConvergent { t: f64, residual: f64 },
    #[error("flow did not complete")]
    Incomplete,
    #[error("invalid slab: {0}")]
    InvalidSlab(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("degenerate planar domain: {0}")]
    DegenerateDomain(String),
    #[error("X_f vanishes at {0:?}")]
    CriticalPoint(Vec<f64>),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
