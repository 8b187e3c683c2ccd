//! The `infodemand` command line.
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 usage,
//! 3 scenario/config, 4 trial-table schema.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Frame};
use crate::gaussian::{AcquisitionMask, BeliefState, ScalarBelief, SignalModel};
use crate::sim::{self, Scenario};
use crate::verify::{self, Suite};
use crate::voi::{self, DecisionContext, MIN_DRAWS};

/// Overrides the default Monte Carlo draw count of `voi`.
pub const DRAWS_ENV: &str = "INFODEMAND_DRAWS";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "infodemand", version, about = "Value of information, experiment simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Value of one signal (closed form and Monte Carlo) or of every bundle.
    Voi(VoiArgs),
    /// Simulate the randomized information experiment.
    Simulate(SimulateArgs),
    /// Fit the regression specs and write summary tables.
    Analyze(AnalyzeArgs),
    /// Run a self-check suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct VoiArgs {
    /// JSON belief file; excludes the scalar flags.
    #[arg(long, conflicts_with_all = ["mu", "sigma2", "noise_var", "reservation", "cost"])]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub reservation: Option<f64>,
    #[arg(long)]
    pub cost: Option<f64>,
    /// Monte Carlo draws [default: $INFODEMAND_DRAWS or 100000]
    #[arg(long)]
    pub draws: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Print the value of every subset of alternatives.
    #[arg(long)]
    pub bundle: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; the built-in default scenario when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replaces the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Comma-separated spec families; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub specs: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// prop1, propB1, lemmaB1 or oracle
    #[arg(long)]
    pub suite: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

/// Belief file for `voi --config`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoiConfig {
    pub mu: Vec<f64>,
    #[serde(default)]
    pub common_var: f64,
    pub specific_var: Vec<f64>,
    pub noise_var: f64,
    pub reservation: f64,
    #[serde(default)]
    pub cost: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Config(anyhow::Error),
    #[error("{0:#}")]
    Schema(anyhow::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) | CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Schema(_) => 4,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// SHA-256 of the canonical scenario, or of the input table for `analyze`.
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Voi(a) => cmd_voi(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn default_draws() -> Result<u64, CliError> {
    match std::env::var(DRAWS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{DRAWS_ENV}={v:?} is not a non-negative integer"))),
        Err(_) => Ok(voi::DEFAULT_DRAWS),
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn cmd_voi(a: &VoiArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let draws = match a.draws {
        Some(d) => d,
        None => default_draws()?,
    };
    if draws < MIN_DRAWS {
        return Err(CliError::Usage(format!("--draws must be at least {MIN_DRAWS}, got {draws}")));
    }
    let (belief, noise_var, ctx) = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(CliError::Config)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let c: VoiConfig = serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Config(anyhow::anyhow!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
            let belief = BeliefState::new(c.mu, c.common_var, c.specific_var)
                .map_err(|e| CliError::Config(anyhow::anyhow!("{}: {e}", path.display())))?;
            let ctx = DecisionContext::new(c.reservation, c.cost)
                .map_err(|e| CliError::Config(anyhow::anyhow!("{}: {e}", path.display())))?;
            (belief, c.noise_var, ctx)
        }
        None => {
            let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")));
            let mu = need(a.mu, "mu")?;
            let sigma2 = need(a.sigma2, "sigma2")?;
            let noise_var = need(a.noise_var, "noise-var")?;
            let reservation = need(a.reservation, "reservation")?;
            let cost = need(a.cost, "cost")?;
            let prior = ScalarBelief::new(mu, sigma2).map_err(usage)?;
            let belief = BeliefState::scalar(prior).map_err(usage)?;
            (belief, noise_var, DecisionContext::new(reservation, cost).map_err(usage)?)
        }
    };
    let signal = SignalModel::new(noise_var, belief.mu().to_vec()).map_err(usage)?;

    if belief.len() == 1 && !a.bundle {
        let exact = voi::voi_closed_form(belief.marginal(0), noise_var, ctx).map_err(usage)?;
        let mask = AcquisitionMask::from_indices(1, &[0], ctx.cost).map_err(usage)?;
        let mc = voi::voi_monte_carlo(&belief, &signal, &mask, ctx, draws, a.seed).map_err(usage)?;
        writeln!(out, "closed_form,monte_carlo,mc_std_err,draws").context("writing output")?;
        writeln!(out, "{:.12},{:.12},{:.12},{}", exact.value, mc.value, mc.std_err, mc.draws).context("writing output")?;
        return Ok(());
    }
    let table = voi::bundle_table(&belief, &signal, ctx, draws, a.seed).map_err(usage)?;
    let best = table.argmax();
    writeln!(out, "bundle,signals,value,std_err,argmax").context("writing output")?;
    for (k, e) in table.entries().iter().enumerate() {
        let k = k as u32;
        writeln!(
            out,
            "\"{}\",{},{:.12},{:.12},{}",
            table.label(k),
            k.count_ones(),
            e.value,
            e.std_err,
            u8::from(k == best)
        )
        .context("writing output")?;
    }
    Ok(())
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario, CliError> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading scenario {}", p.display()))
                .map_err(CliError::Config)?;
            Scenario::from_json(&text).map_err(|e| CliError::Config(anyhow::anyhow!("{}: {e}", p.display())))
        }
    }
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).context("serializing manifest")?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let started = now();
    let mut scenario = load_scenario(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let records = sim::run_phase_sequence(&scenario).map_err(|e| match e {
        sim::SimError::Config(c) => CliError::Config(c.into()),
        other => CliError::Runtime(other.into()),
    })?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let trials = a.out_dir.join("trials.csv");
    let names: Vec<String> = scenario.population.covariates.iter().map(|c| c.name.clone()).collect();
    let file = File::create(&trials).with_context(|| format!("creating {}", trials.display()))?;
    let mut w = BufWriter::new(file);
    sim::write_trials(&mut w, &records, &names).map_err(|e| CliError::Runtime(e.into()))?;
    w.flush().context("writing trials.csv")?;
    write_manifest(
        &a.out_dir,
        &RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: "simulate",
            scenario_hash: scenario.content_hash(),
            seed: Some(scenario.seed),
            started_unix: started,
            finished_unix: now(),
            files: vec!["trials.csv".into()],
        },
    )?;
    writeln!(out, "wrote {} rows to {}", records.len(), trials.display()).context("writing output")?;
    Ok(())
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let started = now();
    let bytes = fs::read(&a.trials)
        .with_context(|| format!("reading {}", a.trials.display()))
        .map_err(CliError::Schema)?;
    let frame = Frame::from_csv(bytes.as_slice()).map_err(|e| CliError::Schema(e.into()))?;
    let written = analysis::write_analysis(&frame, &a.specs, &a.out_dir).map_err(|e| match e {
        AnalysisError::Schema { .. } | AnalysisError::Parse(_) | AnalysisError::Csv(_) => CliError::Schema(e.into()),
        AnalysisError::UnknownFamily(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    })?;
    let files: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_manifest(
        &a.out_dir,
        &RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: "analyze",
            scenario_hash: hex::encode(Sha256::digest(&bytes)),
            seed: None,
            started_unix: started,
            finished_unix: now(),
            files: files.clone(),
        },
    )?;
    writeln!(out, "wrote {} files to {}", files.len(), a.out_dir.display()).context("writing output")?;
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let suite = Suite::parse(&a.suite).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        CliError::Usage(format!("unknown suite {:?} (expected one of {})", a.suite, names.join(", ")))
    })?;
    let report = verify::run_suite(suite, a.seed);
    writeln!(out, "{report}").context("writing output")?;
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(CliError::Verification(format!("{}: {}", c.name, c.detail))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("infodemand").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn scalar_voi_prints_both_columns() {
        let (code, out, _) = call(&[
            "voi", "--mu", "0", "--sigma2", "1", "--noise-var", "1", "--reservation", "0", "--cost", "0", "--draws", "20000",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("closed_form,monte_carlo,mc_std_err,draws"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!((row[0] - 0.282094791774).abs() < 1e-9);
        assert!((row[0] - row[1]).abs() < 4.0 * row[2]);
    }

    #[test]
    fn prohibitive_cost_picks_empty_bundle() {
        let (code, out, _) = call(&[
            "voi", "--mu", "0", "--sigma2", "1", "--noise-var", "1", "--reservation", "0", "--cost", "1e9", "--bundle",
            "--draws", "1000",
        ]);
        assert_eq!(code, 0);
        let best: Vec<&str> = out.lines().filter(|l| l.ends_with(",1")).collect();
        assert_eq!(best.len(), 1);
        assert!(best[0].starts_with("\"{}\""));
    }

    #[test]
    fn missing_flag_is_named() {
        let (code, _, err) = call(&["voi", "--mu", "0", "--sigma2", "1", "--reservation", "0", "--cost", "0"]);
        assert_eq!(code, 2);
        assert!(err.contains("--noise-var"), "{err}");
    }

    #[test]
    fn config_conflicts_with_scalar_flags() {
        let (code, _, _) = call(&["voi", "--config", "x.json", "--mu", "1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_suite_is_usage_error() {
        let (code, _, err) = call(&["verify", "--suite", "prop9"]);
        assert_eq!(code, 2);
        assert!(err.contains("prop9"));
    }

    #[test]
    fn too_few_draws_is_usage_error() {
        let (code, _, _) = call(&[
            "voi", "--mu", "0", "--sigma2", "1", "--noise-var", "1", "--reservation", "0", "--cost", "0", "--draws", "10",
        ]);
        assert_eq!(code, 2);
    }
}
