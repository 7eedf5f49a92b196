//! Explicit perturbations: the local pair that drops the bracket maximum at
//! rate `ε^{2/3}`, and the staircase pair that kills a first-order operator.

mod displacement;
mod local;
mod staircase;

use thiserror::Error;

use crate::bracketops::BracketError;
use crate::fieldexpr::ExprError;
use crate::hamflow::FlowError;

pub use displacement::{simulate_displacement, tuned, DisplacementOutcome, DisplacementParams};
pub use local::{
    build_phi_profile, local_perturbation, phi_limit, CoreShape, FlowBoxChart, LocalOptions,
    LocalPerturbation, LocalProblem, LocalReport,
};
pub use staircase::{staircase_counterexample, staircase_profile, Staircase, StaircaseReport};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ε = {eps:e} is too large for the construction (limit {limit:e})")]
    Infeasible { eps: f64, limit: f64 },
    #[error("degenerate maximum: {0}")]
    DegenerateMaximum(String),
    #[error("chart assumption violated: {0}")]
    ChartAssumption(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
