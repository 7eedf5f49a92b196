//! The example catalog. Each [`Scenario`] carries its chart, fields,
//! distinguished point, domain and reference values; the references are
//! recomputed whenever a scenario is loaded, so nothing in the catalog is
//! taken on trust.

mod catalog;
mod file;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bracketops::{
    d_power, has_multiplicity, iterated_bracket, phi_invariant, poisson, BilinearForm,
    BracketError, PairingConvention,
};
use crate::exec::{map_range, Exec};
use crate::fieldexpr::{grid_extremum, Chart, ExprError, Extremum, FieldExpr, GridBox};
use crate::perturber::{LocalProblem, PerturbError};

pub use catalog::{
    catalog, cubic_model, incomplete_flow, nonlocal_cutoff, polterovich, quadratic_model,
    quartic_model, scenario, staircase, torus_b, SCENARIO_NAMES,
};
pub use file::{load_scenario_file, parse_scenario_toml, ScenarioFile};

/// Relative tolerance for load-time reference checks.
pub const REFERENCE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{scenario}: reference `{reference}` expected {expected}, measured {measured}")]
    Verification {
        scenario: String,
        reference: String,
        expected: f64,
        measured: f64,
    },
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

/// Where a reference value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Computed by hand and re-derived by the bracket oracles.
    Derived,
    /// Stated outright by the worked example the scenario reproduces.
    Example,
    /// Holds by construction.
    Trivial,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Derived => "derived",
            Source::Example => "example",
            Source::Trivial => "trivial",
        })
    }
}

/// How a reference value is measured.
#[derive(Clone, Debug)]
pub enum Check {
    /// `Φ(x)`.
    Phi,
    /// `−{{h, g}, g}(x)`.
    A,
    /// `{f, g}(x)` (or `B(f, g)(x)` for a custom operator).
    Bracket,
    /// `D^l(h)(x)`.
    DPower(usize),
    /// 1 when `h − h(x)` vanishes to order `2l` at `x`, else 0.
    Multiplicity(usize),
    /// The grid value of `B(f, g)` furthest from the reference.
    BracketConstant(Option<GridBox>),
    /// Grid maximum of `B(f, g)`.
    BracketMax(Option<GridBox>),
    /// As [`Check::BracketConstant`] for the `n`-th family member.
    FamilyConstant(usize, Option<GridBox>),
    /// Grid maximum of `||B(f_n, g_n)| − |extra||` for a named extra field.
    FamilyAbsDeviation(usize, String, Option<GridBox>),
    /// 1 when the operator is antisymmetric.
    Antisymmetric,
    /// Maximal rank of the coefficient matrix over the grid.
    OperatorRank,
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub name: String,
    pub value: f64,
    pub source: Source,
    pub note: String,
    pub check: Check,
}

impl Reference {
    pub fn new(name: &str, value: f64, source: Source, note: &str, check: Check) -> Self {
        Reference {
            name: name.into(),
            value,
            source,
            note: note.into(),
            check,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Expectations {
    /// Every flow in the scenario exists for all times.
    pub complete_flow: Option<bool>,
    /// The bracket cannot be pushed down by `C⁰`-small perturbations.
    pub rigidity: Option<bool>,
    /// The bracket on a subset is controlled by the data on that subset.
    pub locality: Option<bool>,
}

pub type FamilyFn = dyn Fn(usize) -> Result<(FieldExpr, FieldExpr), ScenarioError> + Send + Sync;

/// A sequence `(f_n, g_n)` attached to a scenario.
#[derive(Clone)]
pub struct Family {
    pub description: String,
    build: Arc<FamilyFn>,
}

impl Family {
    pub fn new<F>(description: &str, build: F) -> Self
    where
        F: Fn(usize) -> Result<(FieldExpr, FieldExpr), ScenarioError> + Send + Sync + 'static,
    {
        Family {
            description: description.into(),
            build: Arc::new(build),
        }
    }

    pub fn member(&self, n: usize) -> Result<(FieldExpr, FieldExpr), ScenarioError> {
        if n == 0 {
            return Err(ScenarioError::Invalid("family index starts at 1".into()));
        }
        (self.build)(n)
    }
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Family").field("description", &self.description).finish()
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub summary: String,
    pub chart: Chart,
    /// Present when the operator is a symplectic Poisson bracket.
    pub conv: Option<PairingConvention>,
    pub operator: BilinearForm,
    pub f: FieldExpr,
    pub g: FieldExpr,
    pub x: Vec<f64>,
    pub domain: GridBox,
    pub expect: Expectations,
    pub references: Vec<Reference>,
    pub family: Option<Family>,
    /// Auxiliary named fields (cutoffs, profiles, the target `h`).
    pub extras: BTreeMap<String, FieldExpr>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub expected: f64,
    pub measured: f64,
    pub source: Source,
    pub passed: bool,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// `B(u, v)`: the Poisson bracket or the scenario's custom operator.
    pub fn bracket(&self, u: &FieldExpr, v: &FieldExpr) -> Result<FieldExpr, ScenarioError> {
        Ok(match &self.conv {
            Some(c) => poisson(u, v, c)?,
            None => self.operator.apply(u, v)?,
        })
    }

    pub fn h(&self) -> Result<FieldExpr, ScenarioError> {
        self.bracket(&self.f, &self.g)
    }

    pub fn extra(&self, name: &str) -> Option<&FieldExpr> {
        self.extras.get(name)
    }

    fn conv(&self) -> Result<&PairingConvention, ScenarioError> {
        self.conv.as_ref().ok_or_else(|| {
            ScenarioError::Invalid(format!("{} has no symplectic convention", self.name))
        })
    }

    /// Input for the local construction.
    pub fn local_problem(&self) -> Result<LocalProblem, ScenarioError> {
        Ok(LocalProblem {
            f: self.f.clone(),
            g: self.g.clone(),
            x: self.x.clone(),
            domain: self.domain.clone(),
            conv: self.conv()?.clone(),
        })
    }

    pub fn measure(&self, r: &Reference) -> Result<f64, ScenarioError> {
        let x = &self.x;
        Ok(match &r.check {
            Check::Phi => phi_invariant(&self.f, &self.g, self.conv()?)?.eval(x)?,
            Check::A => {
                let h = self.h()?;
                -iterated_bracket(&h, &[self.g.clone(), self.g.clone()], self.conv()?)?.eval(x)?
            }
            Check::Bracket => self.h()?.eval(x)?,
            Check::DPower(l) => d_power(*l, &self.h()?, &self.f, &self.g, self.conv()?)?.eval(x)?,
            Check::Multiplicity(l) => {
                let ok = has_multiplicity(&self.h()?, x, *l, 1e-8)?;
                if ok { 1.0 } else { 0.0 }
            }
            Check::BracketConstant(region) => {
                let h = self.h()?;
                furthest(&h, r.value, region.as_ref().unwrap_or(&self.domain))?
            }
            Check::BracketMax(region) => {
                let h = self.h()?;
                grid_extremum(
                    |p| h.eval(p),
                    region.as_ref().unwrap_or(&self.domain),
                    Extremum::Max,
                    Exec::Auto,
                )?
                .value
            }
            Check::FamilyConstant(n, region) => {
                let (fx, gx) = self.family_member(*n)?;
                let b = self.bracket(&fx, &gx)?;
                furthest(&b, r.value, region.as_ref().unwrap_or(&self.domain))?
            }
            Check::FamilyAbsDeviation(n, name, region) => {
                let (fx, gx) = self.family_member(*n)?;
                let b = self.bracket(&fx, &gx)?;
                let target = self.extra(name).ok_or_else(|| {
                    ScenarioError::Invalid(format!("{} has no field `{name}`", self.name))
                })?;
                grid_extremum(
                    |p| Ok(b.eval(p)?.abs() - target.eval(p)?.abs()),
                    region.as_ref().unwrap_or(&self.domain),
                    Extremum::MaxAbs,
                    Exec::Auto,
                )?
                .value
            }
            Check::Antisymmetric => {
                if self.operator.is_antisymmetric() { 1.0 } else { 0.0 }
            }
            Check::OperatorRank => self.operator_rank()? as f64,
        })
    }

    pub fn family_member(&self, n: usize) -> Result<(FieldExpr, FieldExpr), ScenarioError> {
        self.family
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid(format!("{} has no family", self.name)))?
            .member(n)
    }

    fn operator_rank(&self) -> Result<usize, ScenarioError> {
        let d = self.dim();
        let grid = self.domain.with_resolution(self.domain.resolution()[0].min(11));
        let ranks = map_range(grid.len(), Exec::Auto, |k| {
            let p = grid.point(k);
            let mut m = nalgebra::DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] = self.operator.coefficient(i, j).eval(&p)?;
                }
            }
            Ok::<_, ScenarioError>(m.rank(1e-10))
        });
        let mut best = 0;
        for r in ranks {
            best = best.max(r?);
        }
        Ok(best)
    }

    /// Recomputes every reference value.
    pub fn verify(&self) -> Result<Vec<CheckOutcome>, ScenarioError> {
        self.references
            .iter()
            .map(|r| {
                let measured = self.measure(r)?;
                let passed = (measured - r.value).abs() <= REFERENCE_TOL * (1.0 + r.value.abs());
                Ok(CheckOutcome {
                    name: r.name.clone(),
                    expected: r.value,
                    measured,
                    source: r.source,
                    passed,
                })
            })
            .collect()
    }

    /// [`Scenario::verify`], failing on the first mismatch.
    pub fn verified(self) -> Result<Self, ScenarioError> {
        for o in self.verify()? {
            if !o.passed {
                return Err(ScenarioError::Verification {
                    scenario: self.name.clone(),
                    reference: o.name,
                    expected: o.expected,
                    measured: o.measured,
                });
            }
        }
        Ok(self)
    }
}

/// The grid value of `h` furthest from `target`.
fn furthest(h: &FieldExpr, target: f64, region: &GridBox) -> Result<f64, ScenarioError> {
    let r = grid_extremum(|p| Ok(h.eval(p)? - target), region, Extremum::MaxAbs, Exec::Auto)?;
    let v = h.eval(&r.argmax)?;
    Ok(v)
}
