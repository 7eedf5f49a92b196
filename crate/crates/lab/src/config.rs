use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    RateSweep,
    DisplacementSim,
    Factorize,
    Counterexample,
    Unicontinuity,
    BoundsReport,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::RateSweep,
        Experiment::DisplacementSim,
        Experiment::Factorize,
        Experiment::Counterexample,
        Experiment::Unicontinuity,
        Experiment::BoundsReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::RateSweep => "rate-sweep",
            Experiment::DisplacementSim => "displacement-sim",
            Experiment::Factorize => "factorize",
            Experiment::Counterexample => "counterexample",
            Experiment::Unicontinuity => "unicontinuity",
            Experiment::BoundsReport => "bounds-report",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// One experiment run. Every field except `experiment` and the scenario has
/// a kind-specific default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in scenario name.
    pub scenario: Option<String>,
    /// Scenario TOML file, used instead of a built-in.
    pub scenario_file: Option<PathBuf>,
    pub experiment: Option<Experiment>,
    pub eps: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    /// Family indices for counterexample and unicontinuity runs.
    pub n: Option<Vec<usize>>,
    /// Grid points per axis for the rate sweep.
    pub resolution: Option<usize>,
    /// Slab sample count for displacement runs.
    pub samples: Option<usize>,
    /// Random instances added to a factorize run.
    pub random: Option<usize>,
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.scenario_file.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: ExperimentConfig) -> Self {
        ExperimentConfig {
            scenario: other.scenario.or(self.scenario),
            scenario_file: other.scenario_file.or(self.scenario_file),
            experiment: other.experiment.or(self.experiment),
            eps: other.eps.or(self.eps),
            t: other.t.or(self.t),
            r: other.r.or(self.r),
            alpha: other.alpha.or(self.alpha),
            n: other.n.or(self.n),
            resolution: other.resolution.or(self.resolution),
            samples: other.samples.or(self.samples),
            random: other.random.or(self.random),
            seed: other.seed.or(self.seed),
            out: other.out.or(self.out),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.is_none() {
            return Err(ConfigError("no experiment given".into()));
        }
        match (&self.scenario, &self.scenario_file) {
            (None, None) => return Err(ConfigError("no scenario given".into())),
            (Some(_), Some(_)) => {
                return Err(ConfigError("give either a scenario name or a file, not both".into()))
            }
            _ => {}
        }
        if let Some(eps) = &self.eps {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(ConfigError("every ε must be positive and finite".into()));
            }
        }
        for (name, v) in [("t", self.t), ("r", self.r), ("alpha", self.alpha)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(n) = &self.n {
            if n.is_empty() || n.contains(&0) {
                return Err(ConfigError("family indices start at 1".into()));
            }
        }
        if let Some(r) = self.resolution {
            if r < 3 {
                return Err(ConfigError("resolution must be at least 3".into()));
            }
        }
        if self.samples == Some(0) {
            return Err(ConfigError("samples must be positive".into()));
        }
        Ok(())
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let name = self.scenario.as_deref().unwrap_or("scenario");
            PathBuf::from(format!("lab-out/{name}-{}", self.experiment()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_and_overlays() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            scenario = "cubic_model"
            experiment = "rate-sweep"
            eps = [1e-3, 1e-4]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::RateSweep));
        assert_eq!(cfg.seed(), 42);
        let cli = ExperimentConfig {
            seed: Some(7),
            ..Default::default()
        };
        let merged = cfg.overlay(cli);
        assert_eq!(merged.seed(), 7);
        assert_eq!(merged.eps.as_deref(), Some(&[1e-3, 1e-4][..]));
        assert!(merged.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = ExperimentConfig {
            scenario: Some("cubic_model".into()),
            experiment: Some(Experiment::RateSweep),
            eps: Some(vec![-1.0]),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
        assert!("rate".parse::<Experiment>().is_err());
    }
}
