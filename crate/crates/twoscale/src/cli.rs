//! Argument parsing and config assembly.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::commands::{execute, Outcome};
use crate::config::{apply_override, read_config_value, RunConfig, Study};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "twoscale", version, about = "Slow-fast stochastic reaction-diffusion averaging studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; replaces `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "TWOSCALE_JOBS")]
    pub jobs: Option<usize>,
    /// Run directory; replaces `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dot-path override such as `basis.n=8`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Spectral, Lipschitz and contraction checks.
    Check,
    /// One coupled slow-fast path.
    Simulate,
    /// Ergodic statistics of the frozen fast process.
    Fast,
    /// Averaged drift (and diffusion) estimate at one point.
    Estimate,
    /// Remainder study over the ε list.
    Remainder,
    /// Kolmogorov-operator gap over the ε list.
    Gap,
    /// Strong convergence to the averaged equation.
    Converge,
    /// Moment bounds across ε.
    Moments,
    /// Hölder increments across ε.
    Holder,
    /// Distributional comparison at the final time.
    Weak,
}

impl Command {
    pub fn study(self) -> Study {
        match self {
            Command::Check => Study::Check,
            Command::Simulate => Study::Simulate,
            Command::Fast => Study::Fast,
            Command::Estimate => Study::Estimate,
            Command::Remainder => Study::Remainder,
            Command::Gap => Study::Gap,
            Command::Converge => Study::Converge,
            Command::Moments => Study::Moments,
            Command::Holder => Study::Holder,
            Command::Weak => Study::Weak,
        }
    }
}

impl Cli {
    /// Config file, then overrides, then the dedicated flags.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let study = self.command.study();
        let mut v = match &self.config {
            Some(p) => read_config_value(p)?,
            None => json!({}),
        };
        if !v.is_object() {
            return Err(CliError::config("<root>", "config must be a JSON object"));
        }
        for o in &self.overrides {
            apply_override(&mut v, o)?;
        }
        if let Some(seed) = self.seed {
            v["seed"] = json!(seed);
        }
        if let Some(out) = &self.out {
            v["out"] = json!(out);
        }
        match v.get("study") {
            None | Some(Value::Null) => v["study"] = json!(study),
            Some(s) if *s == json!(study) => {}
            Some(s) => {
                return Err(CliError::config("study", format!("config selects {s} but the command is {study}")));
            }
        }
        RunConfig::from_value(v)
    }
}

/// Parses the configuration and runs the study on a pool of `--jobs` threads.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = cli.run_config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| execute(&cfg))
}

/// Runs and reports; returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(o) => {
            println!("{} {}: {}", o.study, serde_json::to_string(&o.status).unwrap_or_default().trim_matches('"'), o.summary);
            o.status.exit_code()
        }
        Err(e) => {
            eprintln!("twoscale: {e}");
            e.exit_code()
        }
    }
}

