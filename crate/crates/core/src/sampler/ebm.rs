//! Energy-based prediction: Langevin sampling of `y` on an energy
//! `U(y, x, theta)` and the contrastive maximum-likelihood update.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, Origin, SampleStack, Shape};
use crate::rng;
use crate::sampler::langevin::{run_chain, LangevinConfig};
use crate::sampler::mlp::ToyMlp;

/// Scalar energy over `(y, x)` with analytic gradients.
pub trait EnergyFn: Clone {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn energy(&self, y: &[f64], x: &[f64]) -> f64;
    fn grad_y(&self, y: &[f64], x: &[f64]) -> Vec<f64>;
    fn grad_params(&self, y: &[f64], x: &[f64]) -> Vec<f64>;
}

fn set_exact(dst: &mut [f64], src: &[f64]) -> Result<()> {
    if dst.len() != src.len() {
        return Err(UqError::shape(format!(
            "{} parameters for an energy with {}",
            src.len(),
            dst.len()
        )));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// `U = |y - center|^2 / 2`; the parameters are the center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEnergy {
    pub center: Vec<f64>,
}

impl EnergyFn for QuadraticEnergy {
    fn params(&self) -> Vec<f64> {
        self.center.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        set_exact(&mut self.center, params)
    }

    fn energy(&self, y: &[f64], _x: &[f64]) -> f64 {
        0.5 * y
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
    }

    fn grad_y(&self, y: &[f64], _x: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.center).map(|(a, c)| a - c).collect()
    }

    fn grad_params(&self, y: &[f64], _x: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.center).map(|(a, c)| c - a).collect()
    }
}

/// `U = theta . y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEnergy {
    pub theta: Vec<f64>,
}

impl EnergyFn for LinearEnergy {
    fn params(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        set_exact(&mut self.theta, params)
    }

    fn energy(&self, y: &[f64], _x: &[f64]) -> f64 {
        self.theta.iter().zip(y).map(|(t, v)| t * v).sum()
    }

    fn grad_y(&self, _y: &[f64], _x: &[f64]) -> Vec<f64> {
        self.theta.clone()
    }

    fn grad_params(&self, y: &[f64], _x: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

/// Network energy `U = net([y, x])[0]`, with a quadratic confinement
/// `weight * |y|^2 / 2` so the density stays normalizable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEnergy {
    pub net: ToyMlp,
    pub y_dim: usize,
    pub confinement: f64,
}

impl MlpEnergy {
    fn input(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        y.iter().chain(x).copied().collect()
    }
}

impl EnergyFn for MlpEnergy {
    fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_params(params)
    }

    fn energy(&self, y: &[f64], x: &[f64]) -> f64 {
        let z = vec![0.0; self.net.latent_dim()];
        let conf = 0.5 * self.confinement * y.iter().map(|v| v * v).sum::<f64>();
        self.net.predict(&self.input(y, x), &z, None)[0] + conf
    }

    fn grad_y(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        let z = vec![0.0; self.net.latent_dim()];
        let cache = self.net.forward(&self.input(y, x), &z, None);
        let g = self.net.backward(&cache, &[1.0]);
        g.input[..self.y_dim]
            .iter()
            .zip(y)
            .map(|(g, v)| g + self.confinement * v)
            .collect()
    }

    fn grad_params(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        let z = vec![0.0; self.net.latent_dim()];
        let cache = self.net.forward(&self.input(y, x), &z, None);
        self.net.backward(&cache, &[1.0]).flat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Chains start at a fixed supplied point (zeros if none given).
    ColdFixed,
    /// Chains start from `N(0, I)` noise.
    ColdNoise,
    /// Chains start from a supplied initial prediction, e.g. a generator's.
    Warm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel<E> {
    pub energy: E,
    pub start_mode: StartMode,
}

fn start_point<E>(
    em: &EnergyModel<E>,
    y0: Option<&[f64]>,
    dim: usize,
    rng: &mut rng::UqRng,
) -> Result<Vec<f64>> {
    let start = match (em.start_mode, y0) {
        (StartMode::ColdNoise, _) => rng::normal_vec(rng, dim),
        (StartMode::ColdFixed, None) => vec![0.0; dim],
        (StartMode::ColdFixed | StartMode::Warm, Some(y)) => y.to_vec(),
        (StartMode::Warm, None) => {
            return Err(UqError::config("warm start needs an initial prediction y0"))
        }
    };
    if start.len() != dim {
        return Err(UqError::shape(format!(
            "start point has {} values, expected {dim}",
            start.len()
        )));
    }
    Ok(start)
}

/// Kept Langevin samples of `y` for input `x`, as raw vectors.
pub fn ebm_langevin_chain<E: EnergyFn>(
    em: &EnergyModel<E>,
    x: &[f64],
    y0: Option<&[f64]>,
    dim: usize,
    cfg: &LangevinConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mut rng = rng::stream_rng(cfg.seed, rng::stream::LANGEVIN);
    let start = start_point(em, y0, dim, &mut rng)?;
    let chain = run_chain(
        start,
        |y| em.energy.grad_y(y, x).iter().map(|g| -g).collect(),
        cfg,
        &mut rng,
    )?;
    Ok(chain.samples)
}

/// Langevin predictions `y <- y - (delta^2/2) dU/dy + delta N(0, Sigma)` as a
/// stack of `1 x dim` real maps.
pub fn ebm_langevin_predict<E: EnergyFn>(
    em: &EnergyModel<E>,
    x: &[f64],
    y0: Option<&[f64]>,
    dim: usize,
    cfg: &LangevinConfig,
) -> Result<SampleStack> {
    let shape = Shape::new(1, dim, 1);
    let maps = ebm_langevin_chain(em, x, y0, dim, cfg)?
        .into_iter()
        .map(|y| DenseMap::raw(shape, y, MapKind::Real))
        .collect();
    SampleStack::new(maps, Origin::Ebm, cfg.seed)
}

/// Data pair with its Langevin-revised prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastivePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_tilde: Vec<f64>,
}

/// `mean U(y_tilde) - mean U(y)`, whose gradient is the update direction.
pub fn contrastive_objective<E: EnergyFn>(energy: &E, batch: &[ContrastivePair]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|p| energy.energy(&p.y_tilde, &p.x) - energy.energy(&p.y, &p.x))
        .sum::<f64>()
        / n
}

/// `mean dU(y_tilde)/dtheta - mean dU(y)/dtheta`.
pub fn contrastive_gradient<E: EnergyFn>(
    energy: &E,
    batch: &[ContrastivePair],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(UqError::EmptyInput("empty contrastive batch".into()));
    }
    let n = batch.len() as f64;
    let mut delta = vec![0.0; energy.params().len()];
    for p in batch {
        if p.y.len() != p.y_tilde.len() {
            return Err(UqError::shape(format!(
                "y has {} values, y_tilde {}",
                p.y.len(),
                p.y_tilde.len()
            )));
        }
        let gs = energy.grad_params(&p.y_tilde, &p.x);
        let gd = energy.grad_params(&p.y, &p.x);
        for ((d, a), b) in delta.iter_mut().zip(gs).zip(gd) {
            *d += (a - b) / n;
        }
    }
    Ok(delta)
}

/// One maximum-likelihood step: lowers the energy of data and raises the
/// energy of sampled predictions.
pub fn ebm_update<E: EnergyFn>(
    em: &EnergyModel<E>,
    batch: &[ContrastivePair],
    lr: f64,
) -> Result<EnergyModel<E>> {
    let delta = contrastive_gradient(&em.energy, batch)?;
    let params: Vec<f64> = em
        .energy
        .params()
        .iter()
        .zip(&delta)
        .map(|(p, d)| p + lr * d)
        .collect();
    let mut next = em.clone();
    next.energy.set_params(&params)?;
    Ok(next)
}
