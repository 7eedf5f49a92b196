//! `lab`: run experiments on the built-in scenarios.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or an
//! experiment aborts, 2 on configuration errors.

mod config;
mod experiments;
mod plots;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rigidlab::scenarios::{catalog, load_scenario_file, scenario, Scenario, ScenarioError};

use config::{ExperimentConfig, Experiment};
use experiments::RunError;

#[derive(Parser)]
#[command(name = "lab", version, about = "Experiments on C0-rigidity of the Poisson bracket")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios with their reference values.
    List,
    /// Run one experiment, from a TOML config and/or flags.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config in TOML; flags override its fields.
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario TOML file instead of a built-in.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<Experiment>,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated family indices.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Grid points per axis for the construction sweeps.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Random instances for factorize.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, config::ConfigError> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            scenario: self.scenario,
            scenario_file: self.scenario_file,
            experiment: self.experiment,
            eps: self.eps,
            t: self.t,
            r: self.r,
            alpha: self.alpha,
            n: self.n,
            resolution: self.resolution,
            samples: self.samples,
            random: self.random,
            seed: self.seed,
            out: self.out,
        };
        let cfg = base.overlay(flags);
        cfg.validate()?;
        Ok(cfg)
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::List => list(),
        Command::Run(args) => run(args),
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("LAB_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                rigidlab::exec::configure_threads(n);
            }
            _ => eprintln!("warning: ignoring LAB_THREADS={v:?}"),
        }
    }
}

fn list() -> ExitCode {
    let all = match catalog() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    match print_catalog(&all) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        // A closed pipe (`lab list | head`) is not an error.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn print_catalog(all: &[Scenario]) -> std::io::Result<bool> {
    let mut out = std::io::stdout().lock();
    let mut ok = true;
    writeln!(out, "{} scenarios", all.len())?;
    for sc in all {
        writeln!(out)?;
        writeln!(out, "{}  (dim {})", sc.name, sc.dim())?;
        writeln!(out, "  {}", sc.summary)?;
        let outcomes = match sc.verify() {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {}: {e}", sc.name);
                ok = false;
                continue;
            }
        };
        for o in outcomes {
            ok &= o.passed;
            writeln!(
                out,
                "  {:<40} {:>14}  [{}]{}",
                o.name,
                format!("{:.6}", o.expected),
                o.source,
                if o.passed { "" } else { "  MISMATCH" }
            )?;
        }
    }
    Ok(ok)
}

fn load(cfg: &ExperimentConfig) -> Result<Scenario, ScenarioError> {
    match (&cfg.scenario, &cfg.scenario_file) {
        (Some(name), _) => scenario(name),
        (None, Some(path)) => load_scenario_file(path),
        (None, None) => unreachable!("validated"),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match args.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let sc = match load(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcome = match experiments::run(&sc, &cfg) {
        Ok(o) => o,
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    let dir = cfg.out_dir();
    match report::write_outputs(&dir, &sc.name, &cfg, &outcome) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    for c in &outcome.checks {
        println!(
            "{} {}: {:e} {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.relation,
            c.resolution
        );
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        for c in outcome.failures() {
            eprintln!("failed check: {}", c.name);
        }
        ExitCode::from(EXIT_FAILED)
    }
}
