use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const REPORT_SCHEMA: &str = "rigidlab-report v1";

/// One verified claim. `resolution` names the grid or sample size behind
/// `measured`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Threshold or reference value the measurement is compared against.
    pub reference: f64,
    pub relation: String,
    pub resolution: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, measured: f64, reference: f64, relation: String, resolution: &str) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            measured,
            reference,
            relation,
            resolution: resolution.into(),
        }
    }

    pub fn at_most(name: &str, measured: f64, bound: f64, resolution: &str) -> Self {
        Self::new(name, measured <= bound, measured, bound, format!("<= {bound:e}"), resolution)
    }

    pub fn at_least(name: &str, measured: f64, bound: f64, resolution: &str) -> Self {
        Self::new(name, measured >= bound, measured, bound, format!(">= {bound:e}"), resolution)
    }

    pub fn above(name: &str, measured: f64, bound: f64, resolution: &str) -> Self {
        Self::new(name, measured > bound, measured, bound, format!("> {bound:e}"), resolution)
    }

    /// `reference` holds the midpoint of `[lo, hi]`.
    pub fn within(name: &str, measured: f64, lo: f64, hi: f64, resolution: &str) -> Self {
        let ok = measured >= lo && measured <= hi;
        Self::new(name, ok, measured, 0.5 * (lo + hi), format!("in [{lo:e}, {hi:e}]"), resolution)
    }

    pub fn flag(name: &str, ok: bool, resolution: &str) -> Self {
        Self::new(name, ok, if ok { 1.0 } else { 0.0 }, 1.0, "== 1".into(), resolution)
    }
}

/// Everything an experiment produced before it is written to disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub data: serde_json::Map<String, Value>,
    /// File name and contents.
    pub csv: Vec<(String, String)>,
    pub svg: Vec<(String, String)>,
}

impl Outcome {
    pub fn check(&mut self, c: CheckResult) {
        self.checks.push(c);
    }

    pub fn data<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.data.insert(key.to_string(), v);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    scenario: &'a str,
    experiment: String,
    config: &'a ExperimentConfig,
    seed: u64,
    passed: bool,
    checks: &'a [CheckResult],
    data: &'a serde_json::Map<String, Value>,
    files: Vec<String>,
}

/// Writes the CSV, SVG and `report.json` files and returns their paths.
pub fn write_outputs(
    dir: &Path,
    scenario: &str,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut files = Vec::new();
    for (name, body) in outcome.csv.iter().chain(&outcome.svg) {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.push(name.clone());
        written.push(p);
    }
    files.push("report.json".into());
    let report = Report {
        schema: REPORT_SCHEMA,
        scenario,
        experiment: cfg.experiment().to_string(),
        config: cfg,
        seed: cfg.seed(),
        passed: outcome.passed(),
        checks: &outcome.checks,
        data: &outcome.data,
        files,
    };
    let p = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&p, text)?;
    written.push(p);
    Ok(written)
}
