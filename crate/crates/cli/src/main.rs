//! `lresnet` — experiment runner for Langevin sampling with ResNet-like
//! neural drift stacks.
//!
//! Subcommands: `sample` (exact or stack-driven chains to trajectory CSV),
//! `experiment` (train + evaluate divergence curves), `bounds` (closed-form
//! bound reports and sweeps), `construct` (explicit network constructions
//! with verification reports), `train` (drift-stack training to a
//! directory).
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric abort (a JSON
//! diagnostic with the failing step lands on stderr).

mod commands;
mod configs;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric { step: usize, message: String },
    Internal(String),
}

#[derive(Parser)]
#[command(name = "lresnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config JSON file; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set chain.steps=100
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Gaussian,
    Gmm,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Default target family when the config does not set one.
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: ExperimentKind,
}

#[derive(Subcommand)]
enum Command {
    /// Run an exact-drift or stack-driven chain and export the trajectory.
    Sample(CommonArgs),
    /// Train per-step drift networks and compare divergence curves against
    /// the exact-drift baseline.
    Experiment(ExperimentArgs),
    /// Evaluate the Wasserstein-2 bound formulas.
    Bounds(CommonArgs),
    /// Emit an explicit network construction with a verification report.
    Construct(CommonArgs),
    /// Train a drift stack and save it as a directory of network files.
    Train(CommonArgs),
}

fn apply_override(doc: &mut serde_json::Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parsed = serde_json::from_str::<serde_json::Value>(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            return Err(CliError::Config(format!(
                "--set {key}: `{part}` is not reachable in the config"
            )));
        }
        let map = node.as_object_mut().unwrap();
        if i == parts.len() - 1 {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

fn load_config_value(args: &CommonArgs) -> Result<serde_json::Value, CliError> {
    let mut doc = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config parse error: {e}")))?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    for set in &args.sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set needs KEY=VALUE, got `{set}`")))?;
        apply_override(&mut doc, key, value)?;
    }
    Ok(doc)
}

fn decode<T: DeserializeOwned>(doc: serde_json::Value) -> Result<(T, String), CliError> {
    let hash = {
        let canonical = serde_json::to_string(&doc)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    };
    let cfg = serde_json::from_value(doc)
        .map_err(|e| CliError::Config(format!("config schema error: {e}")))?;
    Ok((cfg, hash))
}

fn prepare_out(dir: &PathBuf) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(e.to_string()))
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sample(args) => {
            prepare_out(&args.out)?;
            let (cfg, hash) = decode::<configs::SampleConfig>(load_config_value(&args)?)?;
            commands::cmd_sample(cfg, &hash, &args.out)
        }
        Command::Experiment(args) => {
            prepare_out(&args.common.out)?;
            let mut doc = load_config_value(&args.common)?;
            if doc.get("target").is_none() {
                let target = match args.kind {
                    ExperimentKind::Gaussian => {
                        lresnet_core::config::TargetSpec::default_gaussian()
                    }
                    ExperimentKind::Gmm => lresnet_core::config::TargetSpec::default_gmm(),
                };
                doc.as_object_mut().unwrap().insert(
                    "target".into(),
                    serde_json::to_value(target).map_err(|e| CliError::Internal(e.to_string()))?,
                );
            }
            let (cfg, hash) = decode::<lresnet_core::config::ExperimentConfig>(doc)?;
            commands::cmd_experiment(cfg, &hash, &args.common.out)
        }
        Command::Bounds(args) => {
            prepare_out(&args.out)?;
            let (cfg, hash) = decode::<configs::BoundsConfig>(load_config_value(&args)?)?;
            commands::cmd_bounds(cfg, &hash, &args.out)
        }
        Command::Construct(args) => {
            prepare_out(&args.out)?;
            let (cfg, hash) = decode::<configs::ConstructConfig>(load_config_value(&args)?)?;
            commands::cmd_construct(cfg, &hash, &args.out)
        }
        Command::Train(args) => {
            prepare_out(&args.out)?;
            let (cfg, hash) = decode::<configs::TrainConfig>(load_config_value(&args)?)?;
            commands::cmd_train(cfg, &hash, &args.out)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => {}
        Err(CliError::Config(message)) => {
            eprintln!("configuration error: {message}");
            std::process::exit(2);
        }
        Err(CliError::Numeric { step, message }) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": "numeric_abort", "step": step, "message": message})
            );
            std::process::exit(3);
        }
        Err(CliError::Internal(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
    }
}
