//! Argument parsing and dispatch for the `uq` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uq_core::MapKind;

use crate::commands::{
    run_decompose, run_eval, run_report, run_simulate, run_superpixel, DecomposeArgs, EvalArgs,
    RunContext, SuperpixelArgs,
};
use crate::commands::eval::PredKind;
use crate::config::{resolve_seed, RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "uq", version, about = "Dense uncertainty decomposition and patch-level evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every run-producing subcommand. Flags override the
/// config file; `--set key=value` overrides any config key.
#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed (overrides UQ_SEED and the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// entropy | variance | blvm-entropy | blvm-variance
    #[arg(long)]
    pub mode: Option<String>,
    /// grid:N | slic:N
    #[arg(long)]
    pub patching: Option<String>,
    /// Patch accuracy threshold.
    #[arg(long = "h-a")]
    pub h_a: Option<f64>,
    /// Number of threshold bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// uncertainty | joint
    #[arg(long)]
    pub binning: Option<String>,
    /// Any config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a sample stack into predictive, aleatoric and epistemic maps.
    Decompose {
        /// (T, H, W, C) stack, or (M, S, H, W, C) for the blvm modes.
        #[arg(long)]
        input: PathBuf,
        /// Per-sample variance heads with the input's layout.
        #[arg(long)]
        heads: Option<PathBuf>,
        /// Map kind of the samples (defaults to probability for entropy modes, real otherwise).
        #[arg(long)]
        kind: Option<String>,
        /// Divide u8 payloads by 255.
        #[arg(long)]
        scale_u8: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Patch-level uncertainty scores of predictions against ground truth.
    Eval {
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true)]
        uncertainty: Vec<PathBuf>,
        /// Images for slic patching, one per prediction.
        #[arg(long)]
        image: Vec<PathBuf>,
        /// label | probability
        #[arg(long, default_value = "label")]
        pred_kind: String,
        #[arg(long)]
        scale_u8: bool,
        #[command(flatten)]
        common: Common,
    },
    /// End-to-end synthetic run: data, training, sampling, decomposition, evaluation.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Patch labeling of an image.
    Superpixel {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        scale_u8: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Re-verify a run manifest (or run directory) and summarize it.
    Report {
        path: PathBuf,
    },
}

/// Builds the run context from config file, overrides, flags and the seed
/// environment variable.
pub fn resolve(common: &Common, seed_env: Option<&str>) -> CliResult<RunContext> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{pair}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.context("--set"))?;
    }
    let flags = [
        ("mode", common.mode.clone()),
        ("patching", common.patching.clone()),
        ("h_a", common.h_a.map(|v| v.to_string())),
        ("bins", common.bins.map(|v| v.to_string())),
        ("binning", common.binning.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v).map_err(|e| e.context(format!("--{}", key.replace('_', "-"))))?;
        }
    }
    cfg.validate()?;
    let (seed, source) = resolve_seed(common.seed, seed_env, cfg.seed)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::usage("an output directory is required (--out or `out =` in the config)"))?;
    Ok(RunContext::new(cfg, seed, source, out))
}

/// What a successful invocation produced.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    Run(Manifest),
    Report(String),
}

pub fn run(cli: &Cli, seed_env: Option<&str>) -> CliResult<Outcome> {
    match &cli.command {
        Command::Decompose {
            input,
            heads,
            kind,
            scale_u8,
            common,
        } => {
            let kind = kind
                .as_deref()
                .map(|k| k.parse::<MapKind>())
                .transpose()?;
            let ctx = resolve(common, seed_env)?;
            let args = DecomposeArgs {
                input: input.clone(),
                heads: heads.clone(),
                kind,
                scale_u8: *scale_u8,
            };
            Ok(Outcome::Run(run_decompose(&args, &ctx)?))
        }
        Command::Eval {
            pred,
            gt,
            uncertainty,
            image,
            pred_kind,
            scale_u8,
            common,
        } => {
            let ctx = resolve(common, seed_env)?;
            let args = EvalArgs {
                pred: pred.clone(),
                gt: gt.clone(),
                uncertainty: uncertainty.clone(),
                image: image.clone(),
                pred_kind: pred_kind.parse::<PredKind>()?,
                scale_u8: *scale_u8,
            };
            Ok(Outcome::Run(run_eval(&args, &ctx)?))
        }
        Command::Simulate { common } => Ok(Outcome::Run(run_simulate(&resolve(common, seed_env)?)?)),
        Command::Superpixel {
            image,
            scale_u8,
            common,
        } => {
            let ctx = resolve(common, seed_env)?;
            let args = SuperpixelArgs {
                image: image.clone(),
                scale_u8: *scale_u8,
            };
            Ok(Outcome::Run(run_superpixel(&args, &ctx)?))
        }
        Command::Report { path } => Ok(Outcome::Report(run_report(path)?.text)),
    }
}

/// Reads `UQ_SEED` from the process environment.
pub fn seed_from_env() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}
