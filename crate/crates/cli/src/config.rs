//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment. Unknown keys, duplicate keys
//! and out-of-range values are errors; every resolved setting (including the
//! defaults that were not overridden) is echoed into the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use uq_core::calib::{BinningMode, Reducer, DEFAULT_BINS};
use uq_core::loss::ConsistencyVariant;
use uq_core::sampler::mlp::Optimizer;
use uq_core::sampler::DatasetKind;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Decompose,
    Eval,
    Simulate,
    Superpixel,
    Report,
}

impl FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "decompose" => Ok(Task::Decompose),
            "eval" => Ok(Task::Eval),
            "simulate" => Ok(Task::Simulate),
            "superpixel" => Ok(Task::Superpixel),
            "report" => Ok(Task::Report),
            other => Err(CliError::usage(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Decompose => "decompose",
            Task::Eval => "eval",
            Task::Simulate => "simulate",
            Task::Superpixel => "superpixel",
            Task::Report => "report",
        })
    }
}

/// Which parameter-sampling scheme `simulate` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    McDropout,
    DeepEnsemble,
    Snapshot,
    /// Generator trained by alternating back-propagation; latent draws are
    /// nested inside dropout draws.
    Abp,
}

impl FromStr for SamplerKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "mc_dropout" => Ok(SamplerKind::McDropout),
            "deep_ensemble" => Ok(SamplerKind::DeepEnsemble),
            "snapshot" => Ok(SamplerKind::Snapshot),
            "abp" => Ok(SamplerKind::Abp),
            other => Err(CliError::usage(format!("unknown sampler `{other}`"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::McDropout => "mc_dropout",
            SamplerKind::DeepEnsemble => "deep_ensemble",
            SamplerKind::Snapshot => "snapshot",
            SamplerKind::Abp => "abp",
        })
    }
}

/// Decomposition applied by `decompose`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecomposeMode {
    Entropy,
    Variance,
    BlvmEntropy,
    BlvmVariance,
}

impl DecomposeMode {
    pub fn is_nested(self) -> bool {
        matches!(self, DecomposeMode::BlvmEntropy | DecomposeMode::BlvmVariance)
    }

    pub fn is_entropy(self) -> bool {
        matches!(self, DecomposeMode::Entropy | DecomposeMode::BlvmEntropy)
    }
}

impl FromStr for DecomposeMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "entropy" => Ok(DecomposeMode::Entropy),
            "variance" => Ok(DecomposeMode::Variance),
            "blvm-entropy" | "blvm_entropy" => Ok(DecomposeMode::BlvmEntropy),
            "blvm-variance" | "blvm_variance" => Ok(DecomposeMode::BlvmVariance),
            other => Err(CliError::usage(format!(
                "unknown mode `{other}` (entropy, variance, blvm-entropy, blvm-variance)"
            ))),
        }
    }
}

impl fmt::Display for DecomposeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecomposeMode::Entropy => "entropy",
            DecomposeMode::Variance => "variance",
            DecomposeMode::BlvmEntropy => "blvm-entropy",
            DecomposeMode::BlvmVariance => "blvm-variance",
        })
    }
}

/// Patch construction for evaluation: `grid:N` or `slic:N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Patching {
    Grid(usize),
    Slic(usize),
}

impl FromStr for Patching {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::usage(format!("patching `{s}` must be grid:N or slic:N with N >= 1"));
        let (method, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match method {
            "grid" => Ok(Patching::Grid(n)),
            "slic" => Ok(Patching::Slic(n)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Patching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Patching::Grid(n) => write!(f, "grid:{n}"),
            Patching::Slic(n) => write!(f, "slic:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// When present, must agree with the subcommand.
    pub task: Option<Task>,
    pub out: Option<PathBuf>,
    /// Seed from the file; see [`resolve_seed`] for what overrides it.
    pub seed: Option<u64>,

    pub dataset: DatasetKind,
    /// Training points of the 1-D regression tasks.
    pub points: usize,
    /// Side length of the blob images.
    pub image_size: usize,
    /// Number of blob images.
    pub images: usize,
    /// Evaluation inputs on the 1-D tasks.
    pub grid_points: usize,

    pub sampler: SamplerKind,
    /// Samples per stack (`T`).
    pub samples: usize,
    /// Deep-ensemble members (`M`).
    pub members: usize,
    pub dropout_rate: f64,
    /// Latent dimension of the generator (`K`).
    pub latent_dim: usize,
    /// Latent draws per parameter draw for the nested sampler.
    pub latent_samples: usize,
    pub epochs: usize,
    pub snapshot_every: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub lr_decay: f64,
    pub warmup_epochs: usize,

    pub langevin_steps: usize,
    pub langevin_step_size: f64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Observation noise variance of the generator.
    pub sigma2: f64,

    /// Full-image SGD settings of the blob segmenter.
    pub seg_epochs: usize,
    pub seg_learning_rate: f64,
    /// Neighborhood radius of the segmenter's pixel features.
    pub seg_radius: usize,
    pub consistency_weight: f64,
    pub consistency_variant: ConsistencyVariant,
    /// MC-dropout passes behind the sampled aleatoric target.
    pub target_samples: usize,
    /// Epochs between refreshes of that target.
    pub target_refresh: usize,

    pub mode: DecomposeMode,
    pub patching: Patching,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub h_a: f64,
    pub bins: usize,
    pub binning: BinningMode,
    pub reducer: Reducer,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            out: None,
            seed: None,
            dataset: DatasetKind::HeteroRegression1d,
            points: 2000,
            image_size: 32,
            images: 4,
            grid_points: 200,
            sampler: SamplerKind::McDropout,
            samples: 20,
            members: 5,
            dropout_rate: 0.3,
            latent_dim: 8,
            latent_samples: 8,
            epochs: 30,
            snapshot_every: 5,
            hidden: vec![32, 32],
            learning_rate: 0.01,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            lr_decay: 1.0,
            warmup_epochs: 0,
            langevin_steps: 20,
            langevin_step_size: 0.1,
            burn_in: 0,
            thinning: 1,
            sigma2: 0.1,
            seg_epochs: 150,
            seg_learning_rate: 0.5,
            seg_radius: 1,
            consistency_weight: 1.0,
            consistency_variant: ConsistencyVariant::Mse,
            target_samples: 8,
            target_refresh: 10,
            mode: DecomposeMode::Variance,
            patching: Patching::Grid(4),
            compactness: uq_core::calib::patches::DEFAULT_SLIC_COMPACTNESS,
            slic_iterations: uq_core::calib::patches::DEFAULT_SLIC_ITERATIONS,
            h_a: 0.5,
            bins: DEFAULT_BINS,
            binning: BinningMode::UncertaintyOnly,
            reducer: Reducer::Mean,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::usage(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = parse_value(key, value)?;
    if !v.is_finite() {
        return Err(CliError::usage(format!("`{key}` must be finite, got {value}")));
    }
    Ok(v)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value::<usize>(key, v.trim()))
        .collect()
}

impl RunConfig {
    /// Parses `key = value` text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::usage(format!("config line {}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err(at(format!("`{key}` already set on line {first}")));
            }
            cfg.set(key, value).map_err(|e| at(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "task" => self.task = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "dataset" => self.dataset = parse_value(key, value)?,
            "points" => self.points = parse_value(key, value)?,
            "image_size" => self.image_size = parse_value(key, value)?,
            "images" => self.images = parse_value(key, value)?,
            "grid_points" => self.grid_points = parse_value(key, value)?,
            "sampler" => self.sampler = value.parse()?,
            "samples" => self.samples = parse_value(key, value)?,
            "members" => self.members = parse_value(key, value)?,
            "dropout_rate" => self.dropout_rate = parse_f64(key, value)?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "latent_samples" => self.latent_samples = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "snapshot_every" => self.snapshot_every = parse_value(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "optimizer" => self.optimizer = parse_value(key, value)?,
            "lr_decay" => self.lr_decay = parse_f64(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_value(key, value)?,
            "langevin_steps" => self.langevin_steps = parse_value(key, value)?,
            "langevin_step_size" => self.langevin_step_size = parse_f64(key, value)?,
            "burn_in" => self.burn_in = parse_value(key, value)?,
            "thinning" => self.thinning = parse_value(key, value)?,
            "sigma2" => self.sigma2 = parse_f64(key, value)?,
            "seg_epochs" => self.seg_epochs = parse_value(key, value)?,
            "seg_learning_rate" => self.seg_learning_rate = parse_f64(key, value)?,
            "seg_radius" => self.seg_radius = parse_value(key, value)?,
            "consistency_weight" => self.consistency_weight = parse_f64(key, value)?,
            "consistency_variant" => self.consistency_variant = parse_value(key, value)?,
            "target_samples" => self.target_samples = parse_value(key, value)?,
            "target_refresh" => self.target_refresh = parse_value(key, value)?,
            "mode" => self.mode = value.parse()?,
            "patching" => self.patching = value.parse()?,
            "compactness" => self.compactness = parse_f64(key, value)?,
            "slic_iterations" => self.slic_iterations = parse_value(key, value)?,
            "h_a" => self.h_a = parse_f64(key, value)?,
            "bins" => self.bins = parse_value(key, value)?,
            "binning" => self.binning = parse_value(key, value)?,
            "reducer" => self.reducer = parse_value(key, value)?,
            other => return Err(CliError::usage(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Range checks that do not depend on the task.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::usage(msg.to_string()));
        let positive = [
            ("points", self.points),
            ("image_size", self.image_size),
            ("images", self.images),
            ("grid_points", self.grid_points),
            ("samples", self.samples),
            ("latent_samples", self.latent_samples),
            ("epochs", self.epochs),
            ("snapshot_every", self.snapshot_every),
            ("batch_size", self.batch_size),
            ("langevin_steps", self.langevin_steps),
            ("thinning", self.thinning),
            ("slic_iterations", self.slic_iterations),
            ("bins", self.bins),
            ("seg_epochs", self.seg_epochs),
            ("target_samples", self.target_samples),
            ("target_refresh", self.target_refresh),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::usage(format!("`{key}` must be at least 1")));
        }
        if self.members < 2 {
            return fail("`members` must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("`dropout_rate` must lie in [0, 1)");
        }
        if self.hidden.contains(&0) {
            return fail("`hidden` widths must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.seg_learning_rate > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail("`lr_decay` must lie in (0, 1]");
        }
        if self.warmup_epochs > self.epochs {
            return fail("`warmup_epochs` cannot exceed `epochs`");
        }
        if self.sampler == SamplerKind::Snapshot && self.snapshot_every > self.epochs {
            return fail("`snapshot_every` cannot exceed `epochs`");
        }
        if self.langevin_step_size < 0.0 {
            return fail("`langevin_step_size` must be non-negative");
        }
        if self.burn_in >= self.langevin_steps {
            return fail("`burn_in` must be smaller than `langevin_steps`");
        }
        if !(self.sigma2 > 0.0) {
            return fail("`sigma2` must be positive");
        }
        if self.consistency_weight < 0.0 {
            return fail("`consistency_weight` must be non-negative");
        }
        if self.compactness < 0.0 {
            return fail("`compactness` must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.h_a) {
            return fail("`h_a` must lie in [0, 1]");
        }
        Ok(())
    }

    /// Every setting in canonical `key = value` form, excluding `task` and
    /// `out`, which describe the invocation rather than the computation.
    /// The seed appears only when the file set it; manifests record the
    /// effective seed separately.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let hidden = self
            .hidden
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut pairs: Vec<(&str, String)> = vec![
            ("dataset", self.dataset.to_string()),
            ("points", self.points.to_string()),
            ("image_size", self.image_size.to_string()),
            ("images", self.images.to_string()),
            ("grid_points", self.grid_points.to_string()),
            ("sampler", self.sampler.to_string()),
            ("samples", self.samples.to_string()),
            ("members", self.members.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("latent_samples", self.latent_samples.to_string()),
            ("epochs", self.epochs.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("hidden", hidden),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("langevin_steps", self.langevin_steps.to_string()),
            ("langevin_step_size", self.langevin_step_size.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("thinning", self.thinning.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("seg_epochs", self.seg_epochs.to_string()),
            ("seg_learning_rate", self.seg_learning_rate.to_string()),
            ("seg_radius", self.seg_radius.to_string()),
            ("consistency_weight", self.consistency_weight.to_string()),
            ("consistency_variant", self.consistency_variant.to_string()),
            ("target_samples", self.target_samples.to_string()),
            ("target_refresh", self.target_refresh.to_string()),
            ("mode", self.mode.to_string()),
            ("patching", self.patching.to_string()),
            ("compactness", self.compactness.to_string()),
            ("slic_iterations", self.slic_iterations.to_string()),
            ("h_a", self.h_a.to_string()),
            ("bins", self.bins.to_string()),
            ("binning", self.binning.to_string()),
            ("reducer", self.reducer.to_string()),
        ];
        if let Some(seed) = self.seed {
            pairs.push(("seed", seed.to_string()));
        }
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Renders the settings as config text that parses back to `self`
    /// (apart from `task` and `out`).
    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Where the effective seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Default,
    Config,
    Env,
    Flag,
}

impl fmt::Display for SeedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedSource::Default => "default",
            SeedSource::Config => "config",
            SeedSource::Env => "env:UQ_SEED",
            SeedSource::Flag => "flag:--seed",
        })
    }
}

pub const SEED_ENV: &str = "UQ_SEED";

/// Seed precedence: `--seed` flag, then `UQ_SEED`, then the config file.
pub fn resolve_seed(
    flag: Option<u64>,
    env: Option<&str>,
    config_seed: Option<u64>,
) -> Result<(u64, SeedSource), CliError> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(v) = env {
        let s = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not a 64-bit unsigned integer")))?;
        return Ok((s, SeedSource::Env));
    }
    match config_seed {
        Some(s) => Ok((s, SeedSource::Config)),
        None => Ok((0, SeedSource::Default)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.dropout_rate, 0.3);
        assert_eq!(cfg.members, 5);
        assert_eq!(cfg.latent_dim, 8);
        assert_eq!(cfg.epochs, 30);
        assert_eq!(cfg.snapshot_every, 5);
        assert_eq!(cfg.bins, 10);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::parse("latent_dim = 8\nsampler = abp\nhidden = 8, 4\npatching = slic:50\nseed = 9").unwrap();
        assert_eq!(cfg.latent_dim, 8);
        assert_eq!(cfg.hidden, vec![8, 4]);
        assert_eq!(cfg.patching, Patching::Slic(50));
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        cfg.task = None;
        assert_eq!(back, cfg);
    }

    #[test]
    fn strict_parsing() {
        assert!(RunConfig::parse("# only a comment\n\n").is_ok());
        for bad in [
            "no_such_key = 1",
            "seed = 1\nseed = 2",
            "seed",
            "dropout_rate = 1.0",
            "bins = 0",
            "members = 1",
            "patching = grid:0",
            "patching = tiles:4",
            "h_a = nan",
            "mode = log",
        ] {
            let err = RunConfig::parse(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
        let err = RunConfig::parse("seed = 1\n\nbogus = 2").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), (1, SeedSource::Flag));
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), (2, SeedSource::Env));
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), (3, SeedSource::Config));
        assert_eq!(resolve_seed(None, None, None).unwrap(), (0, SeedSource::Default));
        assert!(resolve_seed(None, Some("-1"), None).is_err());
    }
}
