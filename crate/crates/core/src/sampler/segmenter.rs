//! Dual-head toy segmenter for the blob task.
//!
//! A per-pixel MLP over `(2r+1)^2` neighborhoods (equivalently a small
//! fully-convolutional stack) emits a foreground logit and a raw noise value;
//! `sigma^2 = softplus(raw)` keeps the variance non-negative. Training uses
//! the temperature-attenuated cross-entropy, optionally regularized by the
//! consistency loss towards the MC-dropout mean-entropy map.

use serde::{Deserialize, Serialize};

use crate::decompose::decompose_entropy;
use crate::error::{Result, UqError};
use crate::loss::{
    consistency_loss, het_classification_loss, ConsistencyVariant, DualHeadOutput, HeadMode,
};
use crate::map::{DenseMap, MapKind, SampleStack};
use crate::rng::{self, UqRng};
use crate::sampler::ensemble::mc_dropout_stack;
use crate::sampler::grid::{patch_features, sigmoid, softplus, FeatureGrid, OutputHead};
use crate::sampler::mlp::{Activation, ForwardCache, MlpGrads, ToyMlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub hidden: Vec<usize>,
    /// Neighborhood radius of the input features.
    pub radius: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the consistency term; 0 disables it.
    pub consistency_weight: f64,
    pub consistency_variant: ConsistencyVariant,
    /// MC-dropout passes used for the sampled aleatoric target.
    pub target_samples: usize,
    /// Epochs between refreshes of the sampled target.
    pub target_refresh: usize,
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            hidden: vec![16, 16],
            radius: 1,
            dropout_rate: 0.3,
            epochs: 150,
            learning_rate: 0.5,
            consistency_weight: 0.0,
            consistency_variant: ConsistencyVariant::Mse,
            target_samples: 8,
            target_refresh: 10,
            seed: 0,
        }
    }
}

/// One training image: per-pixel features and observed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    pub grid: FeatureGrid,
    pub labels: DenseMap,
}

impl SegSample {
    pub fn new(image: &DenseMap, labels: DenseMap, radius: usize) -> Result<Self> {
        if !image.shape().same_spatial(&labels.shape()) {
            return Err(UqError::shape("image and labels differ in size"));
        }
        labels.check_labels(2)?;
        Ok(SegSample {
            grid: patch_features(image, radius),
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualHeadSegmenter {
    pub net: ToyMlp,
    pub radius: usize,
}

impl DualHeadSegmenter {
    pub fn new(cfg: &SegmenterConfig) -> Result<Self> {
        let side = 2 * cfg.radius + 1;
        let mut widths = vec![side * side];
        widths.extend(&cfg.hidden);
        widths.push(2);
        let mut net = ToyMlp::new(&widths, Activation::Tanh, cfg.dropout_rate, 0, cfg.seed)?;
        // start the noise head near sigma^2 = softplus(-3)
        let last = net.layers_mut().last_mut().unwrap();
        last.bias[1] = -3.0;
        Ok(DualHeadSegmenter {
            net,
            radius: cfg.radius,
        })
    }

    fn run(
        &self,
        grid: &FeatureGrid,
        mut dropout: Option<&mut UqRng>,
    ) -> (Vec<ForwardCache>, DualHeadOutput) {
        let n = grid.pixels();
        let mut caches = Vec::with_capacity(n);
        let mut logits = Vec::with_capacity(n);
        let mut sigma2 = Vec::with_capacity(n);
        for i in 0..n {
            let mask = dropout.as_deref_mut().map(|r| self.net.draw_mask(r));
            let cache = self.net.forward(grid.feature(i), &[], mask.as_deref());
            logits.push(cache.output[0]);
            sigma2.push(softplus(cache.output[1]));
            caches.push(cache);
        }
        let shape = grid.shape(1);
        let out = DualHeadOutput {
            prediction: DenseMap::raw(shape, logits, MapKind::Logit),
            log_variance: DenseMap::raw(shape, sigma2, MapKind::Real),
            mode: HeadMode::Classification,
        };
        (caches, out)
    }

    /// Deterministic output: logits and `sigma^2` map.
    pub fn dual_output(&self, grid: &FeatureGrid) -> DualHeadOutput {
        self.run(grid, None).1
    }

    pub fn probabilities(&self, grid: &FeatureGrid) -> DenseMap {
        let out = self.dual_output(grid);
        let p = out.prediction.values().iter().map(|&z| sigmoid(z)).collect();
        DenseMap::raw(out.prediction.shape(), p, MapKind::Probability)
    }

    /// MC-dropout stack of foreground probabilities.
    pub fn mc_stack(&self, grid: &FeatureGrid, samples: usize, seed: u64) -> Result<SampleStack> {
        mc_dropout_stack(&self.net, grid, OutputHead::BinaryProbability, samples, seed)
    }

    /// Sampling-based aleatoric map (mean per-sample entropy).
    pub fn sampled_aleatoric(
        &self,
        grid: &FeatureGrid,
        samples: usize,
        seed: u64,
    ) -> Result<DenseMap> {
        Ok(decompose_entropy(&self.mc_stack(grid, samples, seed)?)?.aleatoric)
    }
}

/// Full-image SGD over `images` for `cfg.epochs`. Returns the model and the
/// mean total loss per epoch.
pub fn train_segmenter(
    images: &[SegSample],
    cfg: &SegmenterConfig,
) -> Result<(DualHeadSegmenter, Vec<f64>)> {
    if images.is_empty() {
        return Err(UqError::EmptyInput("no training images".into()));
    }
    if cfg.consistency_weight > 0.0 && (cfg.target_samples == 0 || cfg.target_refresh == 0) {
        return Err(UqError::config(
            "consistency training needs target_samples and target_refresh >= 1",
        ));
    }
    let mut model = DualHeadSegmenter::new(cfg)?;
    let mut dropout = rng::stream_rng(cfg.seed, rng::stream::DROPOUT);
    let mut targets: Vec<Option<DenseMap>> = vec![None; images.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for (k, img) in images.iter().enumerate() {
            let (caches, out) = model.run(&img.grid, Some(&mut dropout));
            let task = het_classification_loss(&out.prediction, &out.log_variance, &img.labels)?;
            let mut grad_sigma: Vec<f64> = task.gradients.noise.values().to_vec();
            let mut total = task.total;
            if cfg.consistency_weight > 0.0 {
                if epoch % cfg.target_refresh == 0 || targets[k].is_none() {
                    let seed = rng::derive_seed(cfg.seed, (epoch * images.len() + k) as u64);
                    targets[k] =
                        Some(model.sampled_aleatoric(&img.grid, cfg.target_samples, seed)?);
                }
                let target = targets[k].as_ref().unwrap();
                let c = consistency_loss(&out.log_variance, target, cfg.consistency_variant)?;
                total += cfg.consistency_weight * c.loss.total;
                for (g, cg) in grad_sigma.iter_mut().zip(c.loss.gradients.prediction.values()) {
                    *g += cfg.consistency_weight * cg;
                }
            }
            if !total.is_finite() {
                return Err(UqError::Training {
                    member: 0,
                    epoch: epoch + 1,
                });
            }
            epoch_loss += total;
            let mut grads = MlpGrads::zeros_like(&model.net);
            for (i, cache) in caches.iter().enumerate() {
                let g_logit = task.gradients.prediction.values()[i];
                let g_raw = grad_sigma[i] * sigmoid(cache.output[1]);
                grads.add_scaled(&model.net.backward(cache, &[g_logit, g_raw]), 1.0);
            }
            model.net.apply(&grads, -cfg.learning_rate);
        }
        history.push(epoch_loss / images.len() as f64);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::synthetic::{make_synthetic, DatasetKind};

    #[test]
    fn short_training_is_deterministic_and_finite() {
        let d = make_synthetic(DatasetKind::BlobSegmentation2d, 16, 3).unwrap();
        let b = d.blobs().unwrap();
        let sample = SegSample::new(&b.image, b.labels.clone(), 1).unwrap();
        let cfg = SegmenterConfig {
            epochs: 3,
            consistency_weight: 1.0,
            target_refresh: 2,
            ..Default::default()
        };
        let (m1, h1) = train_segmenter(std::slice::from_ref(&sample), &cfg).unwrap();
        let (m2, h2) = train_segmenter(std::slice::from_ref(&sample), &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert!(h1.iter().all(|v| v.is_finite()));
        let out = m1.dual_output(&sample.grid);
        assert!(out.log_variance.values().iter().all(|&v| v >= 0.0));
        assert!(train_segmenter(&[], &cfg).is_err());
    }
}
