//! Small fully-connected network with analytic gradients.
//!
//! Dropout acts on the deepest feature vector (the input of the output
//! layer). The latent vector `z`, when present, is concatenated after the
//! masked features so it is never dropped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::rng::{self, UqRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn state(self, model: &ToyMlp) -> OptimizerState {
        match self {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam => OptimizerState::Adam(Adam::new(model.param_count())),
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(UqError::config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam(Adam),
}

/// Adam moment estimates (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(params: usize) -> Self {
        Adam {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    /// Returns the bias-corrected update to subtract from the parameters.
    pub fn step(&mut self, grad: &[f64], learning_rate: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                learning_rate * (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMlp {
    widths: Vec<usize>,
    layers: Vec<Layer>,
    pub activation: Activation,
    dropout_rate: f64,
    latent_dim: usize,
    pub rng_seed: u64,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer (after masking/concatenation for the last one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Vec<f64>>,
    mask: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    /// Per-layer `(weights, bias)` gradients, same layout as the layers.
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub input: Vec<f64>,
    pub latent: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(model: &ToyMlp) -> Self {
        MlpGrads {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
            input: vec![0.0; model.input_dim()],
            latent: vec![0.0; model.latent_dim],
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, o)| *a += scale * o);
            b.iter_mut().zip(ob).for_each(|(a, o)| *a += scale * o);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

impl ToyMlp {
    /// Network with `widths = [input, hidden.., output]`, Glorot-style normal
    /// initialization drawn from `seed`, and zero biases.
    pub fn new(
        widths: &[usize],
        activation: Activation,
        dropout_rate: f64,
        latent_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(UqError::config(
                "an MLP needs at least input and output widths, all positive",
            ));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(UqError::config(format!(
                "dropout rate {dropout_rate} must lie in [0, 1)"
            )));
        }
        let mut init = rng::stream_rng(seed, rng::stream::INIT);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let inputs = pair[0] + if i == last { latent_dim } else { 0 };
                let outputs = pair[1];
                let scale = (2.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| scale * rng::normal(&mut init))
                        .collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(ToyMlp {
            widths: widths.to_vec(),
            layers,
            activation,
            dropout_rate,
            latent_dim,
            rng_seed: seed,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Width of the masked feature vector.
    pub fn feature_dim(&self) -> usize {
        self.widths[self.widths.len() - 2]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(UqError::shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// `params += step * grads`.
    pub fn apply(&mut self, grads: &MlpGrads, step: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(gw).for_each(|(w, g)| *w += step * g);
            l.bias.iter_mut().zip(gb).for_each(|(b, g)| *b += step * g);
        }
    }

    /// Makes output `unit` the constant `bias` by zeroing its incoming weights.
    pub fn reset_output_unit(&mut self, unit: usize, bias: f64) {
        let last = self.layers.last_mut().expect("at least one layer");
        let k = last.inputs;
        last.weights[unit * k..(unit + 1) * k].iter_mut().for_each(|w| *w = 0.0);
        last.bias[unit] = bias;
    }

    /// Optimizer step towards lower loss for the gradient `grads`.
    pub fn descend(&mut self, grads: &MlpGrads, learning_rate: f64, state: &mut OptimizerState) {
        match state {
            OptimizerState::Sgd => self.apply(grads, -learning_rate),
            OptimizerState::Adam(adam) => {
                let step = adam.step(&grads.flat(), learning_rate);
                let params: Vec<f64> = self.params().iter().zip(&step).map(|(p, d)| p - d).collect();
                self.set_params(&params).expect("parameter count is fixed");
            }
        }
    }

    /// Inverted-dropout mask over the feature vector: entries are either 0
    /// or `1 / (1 - rate)`, so the expected masked feature is unchanged.
    pub fn draw_mask(&self, rng: &mut UqRng) -> Vec<f64> {
        let keep = 1.0 - self.dropout_rate;
        (0..self.feature_dim())
            .map(|_| {
                if self.dropout_rate == 0.0 || rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64], z: &[f64], mask: Option<&[f64]>) -> ForwardCache {
        debug_assert_eq!(x.len(), self.input_dim());
        debug_assert_eq!(z.len(), self.latent_dim);
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            if i == last {
                if let Some(m) = mask {
                    h.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
                h.extend_from_slice(z);
            }
            let a = layer.forward(&h);
            inputs.push(std::mem::take(&mut h));
            if i == last {
                h = a;
            } else {
                h = a.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(a);
            }
        }
        ForwardCache {
            inputs,
            pre,
            mask: mask.map(<[f64]>::to_vec),
            output: h,
        }
    }

    pub fn predict(&self, x: &[f64], z: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
        self.forward(x, z, mask).output
    }

    /// Back-propagates `grad_out` (d objective / d output).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> MlpGrads {
        let last = self.layers.len() - 1;
        let mut layers = vec![(Vec::new(), Vec::new()); self.layers.len()];
        let mut delta = grad_out.to_vec();
        let mut latent = Vec::new();
        let mut input = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            let mut gw = vec![0.0; layer.weights.len()];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(x).for_each(|(g, v)| *g = d * v);
            }
            let mut gx = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                gx.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
            layers[i] = (gw, delta.clone());
            if i == last {
                let features = layer.inputs - self.latent_dim;
                latent = gx.split_off(features);
                if let Some(m) = &cache.mask {
                    gx.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
                }
            }
            if i == 0 {
                input = gx;
            } else {
                delta = gx
                    .iter()
                    .zip(&cache.pre[i - 1])
                    .map(|(g, p)| g * self.activation.derivative(*p))
                    .collect();
            }
        }
        MlpGrads {
            layers,
            input,
            latent,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
        (0..at.len())
            .map(|i| {
                let mut p = at.to_vec();
                p[i] += 1e-6;
                let up = f(&p);
                p[i] -= 2e-6;
                (up - f(&p)) / 2e-6
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Tanh, Activation::Identity] {
            let model = ToyMlp::new(&[3, 5, 4, 2], act, 0.3, 2, 9).unwrap();
            let mut r = rng::stream_rng(1, 0);
            let mask = model.draw_mask(&mut r);
            let x = [0.3, -1.2, 0.7];
            let z = [0.5, -0.4];
            let weight = [0.7, -1.3];
            let obj = |m: &ToyMlp, x: &[f64], z: &[f64]| -> f64 {
                let out = m.predict(x, z, Some(&mask));
                out.iter().zip(&weight).map(|(o, w)| o * w).sum()
            };
            let cache = model.forward(&x, &z, Some(&mask));
            let g = model.backward(&cache, &weight);

            let fd_params = numeric_grad(
                |p| {
                    let mut m = model.clone();
                    m.set_params(p).unwrap();
                    obj(&m, &x, &z)
                },
                &model.params(),
            );
            for (a, b) in g.flat().iter().zip(&fd_params) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            let fd_x = numeric_grad(|xx| obj(&model, xx, &z), &x);
            for (a, b) in g.input.iter().zip(&fd_x) {
                assert!((a - b).abs() < 1e-6);
            }
            let fd_z = numeric_grad(|zz| obj(&model, &x, zz), &z);
            for (a, b) in g.latent.iter().zip(&fd_z) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_rate_mask_is_identity() {
        let model = ToyMlp::new(&[2, 4, 1], Activation::Relu, 0.0, 0, 1).unwrap();
        let mut r = rng::stream_rng(1, 0);
        assert!(model.draw_mask(&mut r).iter().all(|&m| m == 1.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ToyMlp::new(&[2, 1], Activation::Tanh, 1.0, 0, 0).is_err());
        assert!(ToyMlp::new(&[2], Activation::Tanh, 0.1, 0, 0).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut m = ToyMlp::new(&[2, 3, 1], Activation::Tanh, 0.1, 1, 4).unwrap();
        let p: Vec<f64> = (0..m.param_count()).map(|i| i as f64).collect();
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
    }
}
