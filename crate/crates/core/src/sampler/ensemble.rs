//! Regression training plus the three parameter-sampling schemes:
//! MC-dropout, deep ensembles and snapshot ensembles.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::loss::{het_regression_loss, DualHeadOutput, HeadMode};
use crate::map::{DenseMap, MapKind, Origin, SampleStack, Shape};
use crate::rng::{self, derive_seed};
use crate::sampler::grid::{evaluate, FeatureGrid, OutputHead};
use crate::sampler::mlp::{Activation, MlpGrads, Optimizer, ToyMlp};
use crate::sampler::synthetic::RegressionData;

/// Architecture of a toy network, used to build fresh members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub latent_dim: usize,
    /// When set, output 1 (the noise head) starts as this constant: its
    /// incoming weights are zeroed and its bias set to the value.
    pub noise_init: Option<f64>,
}

impl ModelSpec {
    /// A `1 -> hidden -> 2` tanh regressor emitting `[f, log sigma^2]` with
    /// the noise head starting at `sigma^2 = 1`.
    pub fn dual_head(hidden: &[usize], dropout_rate: f64) -> Self {
        let mut widths = vec![1];
        widths.extend(hidden);
        widths.push(2);
        ModelSpec {
            widths,
            activation: Activation::Tanh,
            dropout_rate,
            latent_dim: 0,
            noise_init: Some(0.0),
        }
    }

    pub fn build(&self, seed: u64) -> Result<ToyMlp> {
        let mut model = ToyMlp::new(
            &self.widths,
            self.activation,
            self.dropout_rate,
            self.latent_dim,
            seed,
        )?;
        if let Some(bias) = self.noise_init {
            if model.output_dim() < 2 {
                return Err(UqError::config("noise_init needs a two-output network"));
            }
            model.reset_output_unit(1, bias);
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Half squared error on output 0.
    Mse,
    /// Heteroscedastic loss on outputs `[f, log sigma^2]`.
    Heteroscedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub objective: Objective,
    pub optimizer: Optimizer,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    /// Leading epochs that fit the mean only (noise output frozen) before
    /// the heteroscedastic objective takes over.
    pub warmup_epochs: usize,
    /// Seeds shuffling and training-time dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            objective: Objective::Heteroscedastic,
            optimizer: Optimizer::Sgd,
            lr_decay: 1.0,
            warmup_epochs: 0,
            seed: 0,
        }
    }
}

/// Plain mini-batch SGD; dropout is active during training. `on_epoch` runs
/// after every epoch with the 1-based epoch index. Returns mean loss per epoch.
pub fn train_regressor(
    model: &mut ToyMlp,
    data: &RegressionData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &ToyMlp),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(UqError::EmptyInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(UqError::config("batch_size must be at least 1"));
    }
    if cfg.objective == Objective::Heteroscedastic && model.output_dim() < 2 {
        return Err(UqError::config(
            "heteroscedastic training needs a two-output network",
        ));
    }
    let mut shuffle = rng::stream_rng(cfg.seed, rng::stream::SHUFFLE);
    let mut dropout = rng::stream_rng(cfg.seed, rng::stream::DROPOUT);
    if !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) {
        return Err(UqError::config("lr_decay must lie in (0, 1]"));
    }
    let mut state = cfg.optimizer.state(model);
    let mut learning_rate = cfg.learning_rate;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let objective = if epoch <= cfg.warmup_epochs {
            Objective::Mse
        } else {
            cfg.objective
        };
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let mut caches = Vec::with_capacity(b);
            let mut f = Vec::with_capacity(b);
            let mut s = Vec::with_capacity(b);
            let mut y = Vec::with_capacity(b);
            for &i in batch {
                let mask = model.draw_mask(&mut dropout);
                let cache = model.forward(&[data.x[i]], &[], Some(&mask));
                f.push(cache.output[0]);
                s.push(match objective {
                    Objective::Heteroscedastic => cache.output[1],
                    Objective::Mse => 0.0,
                });
                y.push(data.y[i]);
                caches.push(cache);
            }
            let shape = Shape::new(1, b, 1);
            let out = DualHeadOutput::new(
                DenseMap::raw(shape, f, MapKind::Real),
                DenseMap::raw(shape, s, MapKind::Real),
                HeadMode::Regression,
            )?;
            let loss = het_regression_loss(&out, &DenseMap::raw(shape, y, MapKind::Real))
                .map_err(|_| UqError::Training { member: 0, epoch })?;
            if !loss.total.is_finite() {
                return Err(UqError::Training { member: 0, epoch });
            }
            epoch_loss += loss.total * b as f64;
            let mut grads = MlpGrads::zeros_like(model);
            for (k, cache) in caches.iter().enumerate() {
                let mut g_out = vec![0.0; model.output_dim()];
                g_out[0] = loss.gradients.prediction.values()[k];
                if objective == Objective::Heteroscedastic {
                    g_out[1] = loss.gradients.noise.values()[k];
                }
                grads.add_scaled(&model.backward(cache, &g_out), 1.0);
            }
            model.descend(&grads, learning_rate, &mut state);
        }
        learning_rate *= cfg.lr_decay;
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(UqError::Training { member: 0, epoch });
        }
        history.push(mean);
        on_epoch(epoch, model);
    }
    Ok(history)
}

/// `samples` stochastic forward passes with independent dropout masks.
pub fn mc_dropout_stack(
    model: &ToyMlp,
    grid: &FeatureGrid,
    head: OutputHead,
    samples: usize,
    seed: u64,
) -> Result<SampleStack> {
    if samples == 0 {
        return Err(UqError::config("MC-dropout needs at least one sample"));
    }
    if !(0.0..1.0).contains(&model.dropout_rate()) {
        return Err(UqError::config("dropout rate must lie in [0, 1)"));
    }
    let mut rng = rng::stream_rng(seed, rng::stream::DROPOUT);
    let mut maps = Vec::with_capacity(samples);
    let mut heads = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (m, v) = evaluate(model, grid, head, Some(&mut rng));
        maps.push(m);
        heads.extend(v);
    }
    let stack = SampleStack::new(maps, Origin::McDropout, seed)?;
    if heads.is_empty() {
        Ok(stack)
    } else {
        stack.with_variance_heads(heads)
    }
}

/// Deterministic predictions of several models stacked as samples.
pub fn prediction_stack(
    models: &[ToyMlp],
    grid: &FeatureGrid,
    head: OutputHead,
    origin: Origin,
    seed: u64,
) -> Result<SampleStack> {
    let mut maps = Vec::with_capacity(models.len());
    let mut heads = Vec::new();
    for m in models {
        let (map, v) = evaluate(m, grid, head, None);
        maps.push(map);
        heads.extend(v);
    }
    let stack = SampleStack::new(maps, origin, seed)?;
    if heads.is_empty() {
        Ok(stack)
    } else {
        stack.with_variance_heads(heads)
    }
}

/// Trains one member per seed (independent initialization and shuffling)
/// and stacks their predictions on `grid`.
pub fn deep_ensemble_train(
    spec: &ModelSpec,
    data: &RegressionData,
    cfg: &TrainConfig,
    seeds: &[u64],
    grid: &FeatureGrid,
    head: OutputHead,
) -> Result<(Vec<ToyMlp>, SampleStack)> {
    if seeds.len() < 2 {
        return Err(UqError::config(format!(
            "a deep ensemble needs at least 2 members, got {}",
            seeds.len()
        )));
    }
    let mut members = Vec::with_capacity(seeds.len());
    for (member, &seed) in seeds.iter().enumerate() {
        let mut model = spec.build(seed)?;
        let member_cfg = TrainConfig { seed, ..*cfg };
        train_regressor(&mut model, data, &member_cfg, |_, _| {}).map_err(|e| match e {
            UqError::Training { epoch, .. } => UqError::Training { member, epoch },
            other => other,
        })?;
        members.push(model);
    }
    let stack_seed = seeds.iter().fold(0, |acc, &s| derive_seed(acc, s));
    let stack = prediction_stack(&members, grid, head, Origin::DeepEnsemble, stack_seed)?;
    Ok((members, stack))
}

/// One training run whose checkpoints form the ensemble.
#[derive(Debug, Clone)]
pub struct SnapshotTrainer<'a> {
    pub model: ToyMlp,
    pub data: &'a RegressionData,
    pub cfg: TrainConfig,
}

/// Trains for `cfg.epochs` and keeps the model after every `save_every`
/// epochs.
pub fn snapshot_stack(
    trainer: SnapshotTrainer<'_>,
    save_every: usize,
    grid: &FeatureGrid,
    head: OutputHead,
) -> Result<(Vec<ToyMlp>, SampleStack)> {
    if save_every == 0 {
        return Err(UqError::config("save_every must be at least 1"));
    }
    if save_every > trainer.cfg.epochs {
        return Err(UqError::EmptyInput(format!(
            "no checkpoint within {} epochs at save_every={save_every}",
            trainer.cfg.epochs
        )));
    }
    let SnapshotTrainer {
        mut model,
        data,
        cfg,
    } = trainer;
    let mut snapshots = Vec::new();
    train_regressor(&mut model, data, &cfg, |epoch, m| {
        if epoch % save_every == 0 {
            snapshots.push(m.clone());
        }
    })?;
    let stack = prediction_stack(&snapshots, grid, head, Origin::Snapshot, cfg.seed)?;
    Ok((snapshots, stack))
}
