//! Scenario files.
//!
//! ```toml
//! name = "cubic_model"
//! summary = "..."
//! dim = 2
//! f = "x - x^3/3 - x*y^2"
//! g = "y"
//! x = [0.0, 0.0]
//!
//! [convention]          # optional; standard pairs with sign +1 by default
//! pairs = [[0, 1]]
//! sign = 1
//!
//! [domain]
//! bounds = [[-1.0, 1.0], [-1.0, 1.0]]
//! resolution = 201
//!
//! [expect]
//! rigidity = true
//!
//! [[reference]]
//! name = "Phi(x)"
//! kind = "phi"          # phi | A | bracket | d_power | multiplicity | bracket_constant | bracket_max
//! value = 4.0
//! source = "derived"    # derived | example | trivial
//! note = "..."
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Check, Expectations, Reference, Scenario, ScenarioError, Source};
use crate::bracketops::{BilinearForm, PairingConvention};
use crate::fieldexpr::{parse_field_in, Chart, GridBox, ParseContext};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub summary: String,
    pub dim: usize,
    #[serde(default)]
    pub coordinates: Option<Vec<String>>,
    pub f: String,
    pub g: String,
    pub x: Vec<f64>,
    #[serde(default)]
    pub convention: Option<ConventionFile>,
    pub domain: DomainFile,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default, rename = "reference")]
    pub references: Vec<ReferenceFile>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionFile {
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "one")]
    pub sign: i8,
}

fn one() -> i8 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub name: String,
    pub kind: String,
    pub value: f64,
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default)]
    pub region: Option<DomainFile>,
    pub source: Source,
    #[serde(default)]
    pub note: String,
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "derived" => Ok(Source::Derived),
            "example" => Ok(Source::Example),
            "trivial" => Ok(Source::Trivial),
            other => Err(serde::de::Error::custom(format!("unknown source `{other}`"))),
        }
    }
}

impl ScenarioFile {
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let chart = match &self.coordinates {
            Some(names) => Chart::with_names(names),
            None => Chart::standard(self.dim),
        };
        if chart.dim() != self.dim {
            return Err(ScenarioError::Invalid(format!(
                "{} coordinate names for dimension {}",
                chart.dim(),
                self.dim
            )));
        }
        if self.x.len() != self.dim {
            return Err(ScenarioError::Invalid("x has the wrong dimension".into()));
        }
        let conv = match &self.convention {
            Some(c) => PairingConvention::new(c.pairs.clone(), c.sign)?,
            None => PairingConvention::standard(self.dim)?,
        };
        if conv.dim() != self.dim {
            return Err(ScenarioError::Invalid("convention dimension mismatch".into()));
        }
        let ctx = ParseContext::new();
        let f = parse_field_in(&self.f, &chart, &ctx)?;
        let g = parse_field_in(&self.g, &chart, &ctx)?;
        let domain = domain(&self.domain)?;
        if !domain.contains(&self.x) {
            return Err(ScenarioError::Invalid("x lies outside the domain".into()));
        }
        let references = self
            .references
            .iter()
            .map(reference)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scenario {
            name: self.name.clone(),
            summary: self.summary.clone(),
            chart,
            operator: BilinearForm::from_convention(&conv),
            conv: Some(conv),
            f,
            g,
            x: self.x.clone(),
            domain,
            expect: self.expect,
            references,
            family: None,
            extras: BTreeMap::new(),
        })
    }
}

fn domain(d: &DomainFile) -> Result<GridBox, ScenarioError> {
    Ok(GridBox::uniform(&d.bounds, d.resolution)?)
}

fn reference(r: &ReferenceFile) -> Result<Reference, ScenarioError> {
    let region = r.region.as_ref().map(domain).transpose()?;
    let need_l = || {
        r.l.ok_or_else(|| ScenarioError::Invalid(format!("reference `{}` needs `l`", r.name)))
    };
    let check = match r.kind.as_str() {
        "phi" => Check::Phi,
        "A" => Check::A,
        "bracket" => Check::Bracket,
        "d_power" => Check::DPower(need_l()?),
        "multiplicity" => Check::Multiplicity(need_l()?),
        "bracket_constant" => Check::BracketConstant(region),
        "bracket_max" => Check::BracketMax(region),
        other => {
            return Err(ScenarioError::Invalid(format!("unknown reference kind `{other}`")))
        }
    };
    Ok(Reference {
        name: r.name.clone(),
        value: r.value,
        source: r.source,
        note: r.note.clone(),
        check,
    })
}

/// Parses and verifies a scenario from TOML text.
pub fn parse_scenario_toml(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;
    file.build()?.verified()
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario_toml(&std::fs::read_to_string(path)?)
}
