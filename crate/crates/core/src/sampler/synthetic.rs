//! Synthetic datasets with analytically known noise.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, Shape};
use crate::rng::{self, UqRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// `y = sin 2x + 0.3x + eps`, `eps ~ N(0, sigma(x)^2)`,
    /// `sigma(x) = 0.05 + 0.25 |sin x|`, `x ~ U[-3, 3]`.
    HeteroRegression1d,
    /// Same mean function with unit noise everywhere. Points come in
    /// antithetic pairs `f(x) + 1`, `f(x) - 1` at a shared `x`, so the
    /// empirical noise variance is exactly 1 at every input.
    HomoRegression1d,
    /// Soft-edged ellipse masks with label flips concentrated on edges.
    BlobSegmentation2d,
}

impl std::str::FromStr for DatasetKind {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hetero_regression_1d" => Ok(DatasetKind::HeteroRegression1d),
            "homo_regression_1d" => Ok(DatasetKind::HomoRegression1d),
            "blob_segmentation_2d" => Ok(DatasetKind::BlobSegmentation2d),
            other => Err(UqError::config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::HeteroRegression1d => "hetero_regression_1d",
            DatasetKind::HomoRegression1d => "homo_regression_1d",
            DatasetKind::BlobSegmentation2d => "blob_segmentation_2d",
        })
    }
}

pub const X_RANGE: (f64, f64) = (-3.0, 3.0);

pub fn regression_mean(x: f64) -> f64 {
    (2.0 * x).sin() + 0.3 * x
}

/// Noise standard deviation of the heteroscedastic task.
pub fn hetero_noise_std(x: f64) -> f64 {
    0.05 + 0.25 * x.sin().abs()
}

pub const HOMO_NOISE_STD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Ground-truth noise standard deviation at each `x`.
    pub noise_std: Vec<f64>,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    /// Edge softness of the mask, in pixels.
    pub edge_px: f64,
    /// Flip probability at the exact boundary (`mask = 0.5`).
    pub flip_max: f64,
    /// Standard deviation of additive image noise.
    pub image_noise: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            min_ellipses: 2,
            max_ellipses: 4,
            edge_px: 2.0,
            flip_max: 0.4,
            image_noise: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobImage {
    /// Noisy grayscale observation of the soft mask.
    pub image: DenseMap,
    /// Soft foreground mask in `[0, 1]`.
    pub soft_mask: DenseMap,
    pub clean_labels: DenseMap,
    /// Observed labels after boundary flips.
    pub labels: DenseMap,
    /// Per-pixel flip probability.
    pub flip_rate: DenseMap,
}

impl BlobImage {
    /// Expected number of flipped labels, `sum(flip_rate)`.
    pub fn expected_flips(&self) -> f64 {
        self.flip_rate.values().iter().sum()
    }

    /// Draws a fresh set of noisy labels from the flip-rate map.
    pub fn draw_labels(&self, rng: &mut UqRng) -> DenseMap {
        let values = self
            .clean_labels
            .values()
            .iter()
            .zip(self.flip_rate.values())
            .map(|(&c, &r)| if rng.random::<f64>() < r { 1.0 - c } else { c })
            .collect();
        DenseMap::raw(self.clean_labels.shape(), values, MapKind::Label)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum DatasetData {
    Regression(RegressionData),
    Blobs(BlobImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub kind: DatasetKind,
    pub size: usize,
    pub seed: u64,
    pub data: DatasetData,
}

impl SyntheticDataset {
    pub fn regression(&self) -> Option<&RegressionData> {
        match &self.data {
            DatasetData::Regression(r) => Some(r),
            DatasetData::Blobs(_) => None,
        }
    }

    pub fn blobs(&self) -> Option<&BlobImage> {
        match &self.data {
            DatasetData::Blobs(b) => Some(b),
            DatasetData::Regression(_) => None,
        }
    }
}

/// Regression datasets hold `size` points; blob datasets are `size x size`
/// images.
pub fn make_synthetic(kind: DatasetKind, size: usize, seed: u64) -> Result<SyntheticDataset> {
    make_synthetic_with(kind, size, seed, &BlobConfig::default())
}

pub fn make_synthetic_with(
    kind: DatasetKind,
    size: usize,
    seed: u64,
    blob: &BlobConfig,
) -> Result<SyntheticDataset> {
    if size == 0 {
        return Err(UqError::config("dataset size must be at least 1"));
    }
    let mut rng = rng::stream_rng(seed, rng::stream::DATASET);
    let data = match kind {
        DatasetKind::HeteroRegression1d => {
            DatasetData::Regression(regression(&mut rng, size, hetero_noise_std))
        }
        DatasetKind::HomoRegression1d => DatasetData::Regression(antithetic(&mut rng, size)),
        DatasetKind::BlobSegmentation2d => DatasetData::Blobs(blobs(&mut rng, size, blob)?),
    };
    Ok(SyntheticDataset {
        kind,
        size,
        seed,
        data,
    })
}

fn regression(rng: &mut UqRng, n: usize, noise: impl Fn(f64) -> f64) -> RegressionData {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut noise_std = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.random_range(X_RANGE.0..X_RANGE.1);
        let sd = noise(xi);
        x.push(xi);
        y.push(regression_mean(xi) + sd * rng::normal(rng));
        noise_std.push(sd);
    }
    RegressionData { x, y, noise_std }
}

fn antithetic(rng: &mut UqRng, n: usize) -> RegressionData {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        if i % 2 == 0 {
            x.push(rng.random_range(X_RANGE.0..X_RANGE.1));
        } else {
            x.push(x[i - 1]);
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        y.push(regression_mean(x[i]) + sign * HOMO_NOISE_STD);
    }
    RegressionData {
        x,
        y,
        noise_std: vec![HOMO_NOISE_STD; n],
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Approximate signed distance to the boundary, in pixels.
    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let r = ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt();
        (r - 1.0) * self.a.min(self.b)
    }
}

fn blobs(rng: &mut UqRng, side: usize, cfg: &BlobConfig) -> Result<BlobImage> {
    if cfg.min_ellipses == 0 || cfg.max_ellipses < cfg.min_ellipses {
        return Err(UqError::config("blob ellipse count range is empty"));
    }
    if !(0.0..=0.5).contains(&cfg.flip_max) {
        return Err(UqError::config("flip_max must lie in [0, 0.5]"));
    }
    let n = side as f64;
    let count = rng.random_range(cfg.min_ellipses..=cfg.max_ellipses);
    let ellipses: Vec<Ellipse> = (0..count)
        .map(|_| {
            let angle = rng.random_range(0.0..PI);
            Ellipse {
                cx: rng.random_range(0.2..0.8) * n,
                cy: rng.random_range(0.2..0.8) * n,
                a: rng.random_range(0.08..0.25) * n + 1.0,
                b: rng.random_range(0.08..0.25) * n + 1.0,
                cos: angle.cos(),
                sin: angle.sin(),
            }
        })
        .collect();

    let shape = Shape::new(side, side, 1);
    let mut soft = Vec::with_capacity(shape.len());
    for row in 0..side {
        for col in 0..side {
            let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
            let d = ellipses
                .iter()
                .map(|e| e.signed_distance(x, y))
                .fold(f64::INFINITY, f64::min);
            soft.push(1.0 / (1.0 + (d / cfg.edge_px).exp()));
        }
    }
    let clean: Vec<f64> = soft.iter().map(|&m| if m > 0.5 { 1.0 } else { 0.0 }).collect();
    let flip: Vec<f64> = soft.iter().map(|&m| cfg.flip_max * 4.0 * m * (1.0 - m)).collect();
    let image: Vec<f64> = soft
        .iter()
        .map(|&m| m + cfg.image_noise * rng::normal(rng))
        .collect();

    let labels = clean
        .iter()
        .zip(&flip)
        .map(|(&c, &r)| if rng.random::<f64>() < r { 1.0 - c } else { c })
        .collect();
    Ok(BlobImage {
        image: DenseMap::new(shape, image, MapKind::Real)?,
        soft_mask: DenseMap::new(shape, soft, MapKind::Probability)?,
        clean_labels: DenseMap::new(shape, clean, MapKind::Label)?,
        labels: DenseMap::new(shape, labels, MapKind::Label)?,
        flip_rate: DenseMap::new(shape, flip, MapKind::Probability)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_identical() {
        for kind in [DatasetKind::HeteroRegression1d, DatasetKind::BlobSegmentation2d] {
            let a = make_synthetic(kind, 32, 5).unwrap();
            let b = make_synthetic(kind, 32, 5).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, make_synthetic(kind, 32, 6).unwrap());
        }
    }

    #[test]
    fn noise_profile() {
        assert_eq!(hetero_noise_std(0.0), 0.05);
        let d = make_synthetic(DatasetKind::HeteroRegression1d, 100, 1).unwrap();
        let r = d.regression().unwrap();
        assert!(r.x.iter().all(|x| (-3.0..3.0).contains(x)));
        for (x, s) in r.x.iter().zip(&r.noise_std) {
            assert_eq!(*s, hetero_noise_std(*x));
        }
    }

    #[test]
    fn homoscedastic_pairs_have_unit_variance() {
        let d = make_synthetic(DatasetKind::HomoRegression1d, 10, 2).unwrap();
        let r = d.regression().unwrap();
        for pair in 0..5 {
            let (a, b) = (2 * pair, 2 * pair + 1);
            assert_eq!(r.x[a], r.x[b]);
            let m = regression_mean(r.x[a]);
            let var = ((r.y[a] - m).powi(2) + (r.y[b] - m).powi(2)) / 2.0;
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_size_rejected() {
        assert!(make_synthetic(DatasetKind::HeteroRegression1d, 0, 1).is_err());
        assert!("nope".parse::<DatasetKind>().is_err());
    }

    #[test]
    fn flip_counts_match_rate_map() {
        // Monte Carlo counting oracle: the flip-rate map must integrate to
        // the observed number of flips.
        let d = make_synthetic(DatasetKind::BlobSegmentation2d, 256, 21).unwrap();
        let b = d.blobs().unwrap();
        let expected = b.expected_flips();
        assert!(expected > 100.0);
        let mut rng = rng::stream_rng(99, 0);
        let draws = 16;
        let mut flips = 0usize;
        for _ in 0..draws {
            let labels = b.draw_labels(&mut rng);
            flips += labels
                .values()
                .iter()
                .zip(b.clean_labels.values())
                .filter(|(a, c)| a != c)
                .count();
        }
        let observed = flips as f64 / draws as f64;
        let rel = (observed - expected).abs() / expected;
        assert!(rel < 0.02, "observed {observed}, expected {expected}");
    }
}
