//! Rates of the bracket drop under `C⁰`-small perturbations: measured
//! tables, the theoretical band and the remaining explicit bounds.

mod bounds;
mod plot;
mod table;

use thiserror::Error;

use crate::bracketops::BracketError;
use crate::fieldexpr::ExprError;
use crate::perturber::PerturbError;
use crate::trigfact::TrigError;

pub use bounds::{
    first_order_bound, higher_bound, sharper_constant, theoretical_band, truncated_jet_bound,
    unicontinuity_criterion, Band, FirstOrderBound, HigherBound, JetBound, UniRow,
    UniContinuity,
};
pub use plot::{rate_plot_svg, Svg};
pub use table::{fit_loglog, upsilon_upper_curve, LogFit, RatePoint, RateTable, CSV_SCHEMA};

#[derive(Debug, Error)]
pub enum RateError {
    #[error("empty ε list")]
    EmptyList,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate critical point at {point:?} (det Hessian = {det:e})")]
    DegenerateCritical { point: Vec<f64>, det: f64 },
    #[error("h does not have multiplicity {order} at x")]
    Multiplicity { order: usize },
    #[error("degenerate maximum: {0}")]
    DegenerateMaximum(String),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Trig(#[from] TrigError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
