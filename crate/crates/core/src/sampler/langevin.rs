//! Langevin dynamics and alternating back-propagation (ABP).
//!
//! The discretized chain is `x <- x + (s^2 / 2) * grad log p(x) + s * xi`,
//! `xi ~ N(0, c^2 I)` with `c = 1` unless overridden. For latent inference
//! `log p` is `log p(y, z | x, theta)` under a Gaussian observation model with
//! variance `sigma^2` and a standard normal prior on `z`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::rng::{self, UqRng};
use crate::sampler::mlp::{MlpGrads, ToyMlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    pub steps: usize,
    pub step_size: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Scales the injected noise; `None` keeps unit covariance.
    pub noise_scale_override: Option<f64>,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig {
            steps: 20,
            step_size: 0.1,
            burn_in: 0,
            thinning: 1,
            seed: 0,
            noise_scale_override: None,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(UqError::EmptyInput(format!(
                "{} steps with burn-in {} keep no samples",
                self.steps, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(UqError::config("thinning must be at least 1"));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(UqError::config(format!(
                "step size {} must be finite and non-negative",
                self.step_size
            )));
        }
        if let Some(c) = self.noise_scale_override {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(UqError::config("noise scale must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Number of samples a chain keeps.
    pub fn kept(&self) -> usize {
        (self.steps - self.burn_in).div_ceil(self.thinning)
    }
}

/// Output of one chain: kept samples and the final state (for warm starts).
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub last: Vec<f64>,
}

/// Runs a Langevin chain on `grad_log_density` from `start`.
pub fn run_chain(
    start: Vec<f64>,
    mut grad_log_density: impl FnMut(&[f64]) -> Vec<f64>,
    cfg: &LangevinConfig,
    rng: &mut UqRng,
) -> Result<Chain> {
    cfg.validate()?;
    let half = 0.5 * cfg.step_size * cfg.step_size;
    let noise = cfg.step_size * cfg.noise_scale_override.unwrap_or(1.0);
    let mut state = start;
    let mut samples = Vec::with_capacity(cfg.kept());
    for step in 1..=cfg.steps {
        let grad = grad_log_density(&state);
        for (v, g) in state.iter_mut().zip(&grad) {
            *v += half * g + noise * rng::normal(rng);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(UqError::Divergence {
                step,
                detail: "non-finite chain state".into(),
            });
        }
        if step > cfg.burn_in && (step - cfg.burn_in - 1).is_multiple_of(cfg.thinning) {
            samples.push(state.clone());
        }
    }
    Ok(Chain {
        samples,
        last: state,
    })
}

/// `d/dz log p(y, z | x, theta) = (1/sigma^2) (y - f) df/dz - z`.
/// An infinite `sigma2` drops the data term, leaving the prior.
pub fn latent_log_density_grad(
    gen: &ToyMlp,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    sigma2: f64,
) -> Vec<f64> {
    let mut grad: Vec<f64> = z.iter().map(|v| -v).collect();
    if sigma2.is_finite() {
        let cache = gen.forward(x, z, None);
        let residual: Vec<f64> = y
            .iter()
            .zip(&cache.output)
            .map(|(y, f)| (y - f) / sigma2)
            .collect();
        let g = gen.backward(&cache, &residual);
        grad.iter_mut().zip(&g.latent).for_each(|(a, b)| *a += b);
    }
    grad
}

fn check_generator(gen: &ToyMlp, x: &[f64], y: &[f64], sigma2: f64) -> Result<()> {
    if gen.latent_dim() == 0 {
        return Err(UqError::config("generator has no latent input"));
    }
    if !(sigma2 > 0.0) {
        return Err(UqError::config(format!("sigma^2 = {sigma2} must be positive")));
    }
    if x.len() != gen.input_dim() || y.len() != gen.output_dim() {
        return Err(UqError::shape(format!(
            "generator expects x of {} and y of {}, got {} and {}",
            gen.input_dim(),
            gen.output_dim(),
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Posterior samples of `z` given `(x, y)`, chain started at `z0 ~ N(0, I)`.
pub fn abp_langevin_latent(
    gen: &ToyMlp,
    x: &[f64],
    y: &[f64],
    cfg: &LangevinConfig,
    sigma2: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream_rng(cfg.seed, rng::stream::LANGEVIN);
    let z0 = rng::normal_vec(&mut rng, gen.latent_dim());
    Ok(abp_langevin_latent_from(gen, x, y, z0, cfg, sigma2, &mut rng)?.samples)
}

/// Same chain started from a given `z0`, drawing noise from `rng`.
pub fn abp_langevin_latent_from(
    gen: &ToyMlp,
    x: &[f64],
    y: &[f64],
    z0: Vec<f64>,
    cfg: &LangevinConfig,
    sigma2: f64,
    rng: &mut UqRng,
) -> Result<Chain> {
    check_generator(gen, x, y, sigma2)?;
    run_chain(
        z0,
        |z| latent_log_density_grad(gen, x, y, z, sigma2),
        cfg,
        rng,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbpConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Observation noise variance of the generator.
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for AbpConfig {
    fn default() -> Self {
        AbpConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.05,
            sigma2: 0.1,
            seed: 0,
        }
    }
}

/// One labelled example for generator training.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Alternating back-propagation: per batch, infer each example's latent with
/// a short Langevin chain warm-started from its previous value, then take one
/// gradient ascent step on `log p(y, z | x, theta)`.
pub fn abp_learn(
    gen: &ToyMlp,
    data: &[Example],
    langevin: &LangevinConfig,
    cfg: &AbpConfig,
) -> Result<ToyMlp> {
    if data.is_empty() {
        return Err(UqError::EmptyInput("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(UqError::config("batch_size must be at least 1"));
    }
    for ex in data {
        check_generator(gen, &ex.x, &ex.y, cfg.sigma2)?;
    }
    let chain_cfg = LangevinConfig {
        burn_in: 0,
        thinning: 1,
        ..*langevin
    };
    chain_cfg.validate()?;
    let mut model = gen.clone();
    let mut rng = rng::stream_rng(cfg.seed, rng::stream::LATENT);
    let mut latents: Vec<Vec<f64>> = (0..data.len())
        .map(|_| rng::normal_vec(&mut rng, gen.latent_dim()))
        .collect();
    let mut chain_rng = rng::stream_rng(cfg.seed, rng::stream::LANGEVIN);
    let order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let ex = &data[i];
                let chain = run_chain(
                    std::mem::take(&mut latents[i]),
                    |z| latent_log_density_grad(&model, &ex.x, &ex.y, z, cfg.sigma2),
                    &chain_cfg,
                    &mut chain_rng,
                )?;
                latents[i] = chain.last;
            }
            let mut grads = MlpGrads::zeros_like(&model);
            for &i in batch {
                let ex = &data[i];
                let cache = model.forward(&ex.x, &latents[i], None);
                let residual: Vec<f64> = ex
                    .y
                    .iter()
                    .zip(&cache.output)
                    .map(|(y, f)| (y - f) / cfg.sigma2)
                    .collect();
                grads.add_scaled(&model.backward(&cache, &residual), 1.0 / batch.len() as f64);
            }
            model.apply(&grads, cfg.learning_rate);
        }
    }
    Ok(model)
}
