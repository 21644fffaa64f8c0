//! Per-pixel feature grids and the mapping from network outputs to maps.
//!
//! A fully-convolutional toy model is a per-pixel MLP applied to the
//! neighborhood of each pixel; [`patch_features`] builds that neighborhood
//! (edge-replicated) so one [`ToyMlp`] evaluation per pixel gives the same
//! result as a 3x3 convolution stack followed by 1x1 convolutions.

use serde::{Deserialize, Serialize};

use crate::map::{DenseMap, MapKind, Shape};
use crate::rng::UqRng;
use crate::sampler::mlp::ToyMlp;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    /// Pixel-major feature vectors, `height * width * dim` values.
    pub features: Vec<f64>,
}

impl FeatureGrid {
    /// A `1 x n` grid of scalar inputs, used for 1-D regression.
    pub fn from_points(x: &[f64]) -> Self {
        FeatureGrid {
            height: 1,
            width: x.len(),
            dim: 1,
            features: x.to_vec(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn shape(&self, channels: usize) -> Shape {
        Shape::new(self.height, self.width, channels)
    }
}

/// `(2 radius + 1)^2` neighborhood intensities of a single-channel image,
/// centred on each pixel with replicated borders.
pub fn patch_features(image: &DenseMap, radius: usize) -> FeatureGrid {
    let (h, w) = (image.height(), image.width());
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut features = Vec::with_capacity(h * w * side * side);
    for row in 0..h as isize {
        for col in 0..w as isize {
            for dr in -r..=r {
                for dc in -r..=r {
                    let rr = (row + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (col + dc).clamp(0, w as isize - 1) as usize;
                    features.push(image.get(rr, cc, 0));
                }
            }
        }
    }
    FeatureGrid {
        height: h,
        width: w,
        dim: side * side,
        features,
    }
}

/// How network outputs become a sample map (and optional variance head).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// Output 0 is a real prediction.
    Real,
    /// Outputs `[f, s]` with `s = log sigma^2`.
    DualRegression,
    /// Output 0 is a foreground logit.
    BinaryProbability,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Evaluates `model` on every pixel. With `dropout` set, each pixel gets an
/// independent mask.
pub fn evaluate(
    model: &ToyMlp,
    grid: &FeatureGrid,
    head: OutputHead,
    mut dropout: Option<&mut UqRng>,
) -> (DenseMap, Option<DenseMap>) {
    let n = grid.pixels();
    let mut values = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let z = vec![0.0; model.latent_dim()];
    for i in 0..n {
        let mask = dropout.as_deref_mut().map(|r| model.draw_mask(r));
        let out = model.predict(grid.feature(i), &z, mask.as_deref());
        match head {
            OutputHead::Real => values.push(out[0]),
            OutputHead::DualRegression => {
                values.push(out[0]);
                variance.push(out[1].exp());
            }
            OutputHead::BinaryProbability => values.push(sigmoid(out[0])),
        }
    }
    let shape = grid.shape(1);
    let kind = match head {
        OutputHead::BinaryProbability => MapKind::Probability,
        _ => MapKind::Real,
    };
    let heads = (head == OutputHead::DualRegression)
        .then(|| DenseMap::raw(shape, variance, MapKind::Real));
    (DenseMap::raw(shape, values, kind), heads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_features_replicate_borders() {
        let img = DenseMap::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0], MapKind::Real).unwrap();
        let g = patch_features(&img, 1);
        assert_eq!(g.dim, 9);
        assert_eq!(g.feature(0), &[1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 3.0, 3.0, 4.0]);
        assert_eq!(g.feature(3)[4], 4.0);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
    }
}
