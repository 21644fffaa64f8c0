//! Heteroscedastic dual-head losses, the uncertainty consistency loss and
//! trivial-solution diagnostics.
//!
//! Every loss returns its mean value together with per-pixel values and the
//! analytic gradient of the mean with respect to each input map.

use serde::{Deserialize, Serialize};

use crate::decompose::{decompose_entropy, decompose_variance};
use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, SampleStack, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Regression,
    Classification,
}

/// Prediction plus noise head of a two-headed model.
///
/// In regression mode the noise head holds `s = log sigma^2`; in
/// classification mode it holds `sigma^2` directly and the softmax
/// temperature is `exp(sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadOutput {
    pub prediction: DenseMap,
    pub log_variance: DenseMap,
    pub mode: HeadMode,
}

impl DualHeadOutput {
    pub fn new(prediction: DenseMap, log_variance: DenseMap, mode: HeadMode) -> Result<Self> {
        if !prediction.shape().same_spatial(&log_variance.shape()) {
            return Err(UqError::shape(format!(
                "prediction {} and noise head {} differ spatially",
                prediction.shape(),
                log_variance.shape()
            )));
        }
        log_variance.expect_kind(MapKind::Real)?;
        Ok(DualHeadOutput {
            prediction,
            log_variance,
            mode,
        })
    }

    /// Predicted variance `sigma^2(x)` per pixel.
    pub fn variance(&self) -> DenseMap {
        let values = match self.mode {
            HeadMode::Regression => self.log_variance.values().iter().map(|s| s.exp()).collect(),
            HeadMode::Classification => self.log_variance.values().to_vec(),
        };
        DenseMap::raw(self.log_variance.shape(), values, MapKind::Uncertainty)
    }

    /// Temperature `exp(sigma^2)` (classification) per pixel.
    pub fn temperature(&self) -> DenseMap {
        let values = self.variance().values().iter().map(|v| v.exp()).collect();
        DenseMap::raw(self.log_variance.shape(), values, MapKind::Real)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Gradient of the total with respect to the prediction (or logit) map.
    pub prediction: DenseMap,
    /// Gradient with respect to the noise head map.
    pub noise: DenseMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_pixel: DenseMap,
    pub gradients: Gradients,
}

fn check_finite(map: &DenseMap, what: &str) -> Result<()> {
    if let Some(v) = map.values().iter().find(|v| !v.is_finite()) {
        return Err(UqError::invalid(format!("{what} contains {v}")));
    }
    Ok(())
}

/// `0.5 * exp(-s) * (y - f)^2 + 0.5 * s`, averaged over all entries.
pub fn het_regression_loss(out: &DualHeadOutput, target: &DenseMap) -> Result<LossValue> {
    if out.mode != HeadMode::Regression {
        return Err(UqError::config("regression loss needs a regression-mode output"));
    }
    let shape = out.prediction.shape();
    if target.shape() != shape || out.log_variance.shape() != shape {
        return Err(UqError::shape(format!(
            "prediction {shape}, noise {}, target {}",
            out.log_variance.shape(),
            target.shape()
        )));
    }
    check_finite(&out.prediction, "prediction")?;
    check_finite(&out.log_variance, "log variance")?;
    check_finite(target, "target")?;

    let n = shape.len() as f64;
    let mut loss = Vec::with_capacity(shape.len());
    let mut grad_f = Vec::with_capacity(shape.len());
    let mut grad_s = Vec::with_capacity(shape.len());
    for ((f, s), y) in out
        .prediction
        .values()
        .iter()
        .zip(out.log_variance.values())
        .zip(target.values())
    {
        let r = y - f;
        let w = (-s).exp();
        loss.push(0.5 * w * r * r + 0.5 * s);
        grad_f.push(-w * r / n);
        grad_s.push((0.5 - 0.5 * w * r * r) / n);
    }
    let total = loss.iter().sum::<f64>() / n;
    Ok(LossValue {
        total,
        per_pixel: DenseMap::raw(shape, loss, MapKind::Real),
        gradients: Gradients {
            prediction: DenseMap::raw(shape, grad_f, MapKind::Real),
            noise: DenseMap::raw(shape, grad_s, MapKind::Real),
        },
    })
}

/// Cross-entropy of one pixel from its logits and the gradient w.r.t. them.
/// A single logit is the binary (sigmoid) case.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    if let [z] = logits {
        let p = 1.0 / (1.0 + (-z).exp());
        let y = label as f64;
        // softplus(z) - y z, written stably
        let ce = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        return (ce, vec![p - y]);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let ce = sum.ln() + max - logits[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(c, e)| e / sum - if c == label { 1.0 } else { 0.0 })
        .collect();
    (ce, grad)
}

/// Temperature-attenuated cross-entropy `L_ce / T + log T` with `T = exp(sigma^2)`.
pub fn het_classification_loss(
    logit_map: &DenseMap,
    sigma2: &DenseMap,
    target: &DenseMap,
) -> Result<LossValue> {
    let shape = logit_map.shape();
    sigma2.expect_single_channel("sigma^2 map")?;
    target.expect_single_channel("label map")?;
    if !shape.same_spatial(&sigma2.shape()) || !shape.same_spatial(&target.shape()) {
        return Err(UqError::shape(format!(
            "logits {shape}, sigma^2 {}, labels {}",
            sigma2.shape(),
            target.shape()
        )));
    }
    let classes = shape.channels.max(2);
    target.check_labels(classes)?;
    check_finite(logit_map, "logits")?;
    check_finite(sigma2, "sigma^2")?;

    let n = shape.pixels() as f64;
    let pixel_shape = Shape::new(shape.height, shape.width, 1);
    let mut loss = Vec::with_capacity(shape.pixels());
    let mut grad_logits = Vec::with_capacity(shape.len());
    let mut grad_sigma = Vec::with_capacity(shape.pixels());
    for i in 0..shape.pixels() {
        let (ce, g) = cross_entropy_with_grad(logit_map.pixel(i), target.values()[i] as usize);
        let s2 = sigma2.values()[i];
        let inv_t = (-s2).exp();
        loss.push(inv_t * ce + s2);
        grad_logits.extend(g.iter().map(|gc| inv_t * gc / n));
        grad_sigma.push((1.0 - inv_t * ce) / n);
    }
    let total = loss.iter().sum::<f64>() / n;
    Ok(LossValue {
        total,
        per_pixel: DenseMap::raw(pixel_shape, loss, MapKind::Real),
        gradients: Gradients {
            prediction: DenseMap::raw(shape, grad_logits, MapKind::Real),
            noise: DenseMap::raw(pixel_shape, grad_sigma, MapKind::Real),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyVariant {
    #[default]
    Mse,
    /// `1 - SSIM` over the whole map (single global window).
    Ssim,
}

impl std::str::FromStr for ConsistencyVariant {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(ConsistencyVariant::Mse),
            "ssim" => Ok(ConsistencyVariant::Ssim),
            other => Err(UqError::config(format!("unknown consistency variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConsistencyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConsistencyVariant::Mse => "mse",
            ConsistencyVariant::Ssim => "ssim",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyLoss {
    pub loss: LossValue,
    /// At least one map was constant and entered the loss unnormalized.
    pub unnormalized: bool,
}

/// Gradient of `n_i = (h_i - min) / (max - min)` pulled back to `h`.
fn normalize_backward(raw: &[f64], grad_norm: &[f64]) -> Vec<f64> {
    let (mut lo_i, mut hi_i) = (0, 0);
    for (i, &v) in raw.iter().enumerate() {
        if v < raw[lo_i] {
            lo_i = i;
        }
        if v > raw[hi_i] {
            hi_i = i;
        }
    }
    let (lo, hi) = (raw[lo_i], raw[hi_i]);
    let range = hi - lo;
    let mut grad: Vec<f64> = grad_norm.iter().map(|g| g / range).collect();
    let mut to_lo = 0.0;
    let mut to_hi = 0.0;
    for (&v, &g) in raw.iter().zip(grad_norm) {
        let n = (v - lo) / range;
        // d n / d min = (n - 1) / range, d n / d max = -n / range
        to_lo += g * (n - 1.0) / range;
        to_hi += -g * n / range;
    }
    grad[lo_i] += to_lo;
    grad[hi_i] += to_hi;
    grad
}

const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

fn ssim_loss(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let num1 = 2.0 * ma * mb + SSIM_C1;
    let num2 = 2.0 * cov + SSIM_C2;
    let den1 = ma * ma + mb * mb + SSIM_C1;
    let den2 = va + vb + SSIM_C2;
    let ssim = num1 * num2 / (den1 * den2);
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d_num1 = 2.0 * mb / n;
            let d_num2 = 2.0 * (y - mb) / n;
            let d_den1 = 2.0 * ma / n;
            let d_den2 = 2.0 * (x - ma) / n;
            let d_ssim = (d_num1 * num2 + num1 * d_num2) / (den1 * den2)
                - ssim * (d_den1 * den2 + den1 * d_den2) / (den1 * den2);
            -d_ssim
        })
        .collect();
    (1.0 - ssim, grad)
}

/// Distance between a dual-head uncertainty map and a sampling-based
/// aleatoric map, after per-image min-max normalization of both.
///
/// The sampled map is a constant target; only the head receives a gradient.
pub fn consistency_loss(
    head_uncertainty: &DenseMap,
    sampled_aleatoric: &DenseMap,
    variant: ConsistencyVariant,
) -> Result<ConsistencyLoss> {
    head_uncertainty.expect_single_channel("head uncertainty")?;
    sampled_aleatoric.expect_single_channel("sampled aleatoric map")?;
    let shape = head_uncertainty.shape();
    if sampled_aleatoric.shape() != shape {
        return Err(UqError::shape(format!(
            "head {shape} vs sampled {}",
            sampled_aleatoric.shape()
        )));
    }
    check_finite(head_uncertainty, "head uncertainty")?;
    check_finite(sampled_aleatoric, "sampled aleatoric map")?;

    // A constant map has no min-max rescaling; it is compared on raw values.
    let head_norm = head_uncertainty.normalized();
    let target_norm = sampled_aleatoric.normalized();
    let unnormalized = head_norm.is_none() || target_norm.is_none();
    let h = head_norm.as_ref().unwrap_or(head_uncertainty).values();
    let t = target_norm.as_ref().unwrap_or(sampled_aleatoric).values();

    let n = h.len() as f64;
    let (per_pixel, total, grad_h) = match variant {
        ConsistencyVariant::Mse => {
            let per: Vec<f64> = h.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).collect();
            let grad: Vec<f64> = h.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / n).collect();
            let total = per.iter().sum::<f64>() / n;
            (per, total, grad)
        }
        ConsistencyVariant::Ssim => {
            let (l, grad) = ssim_loss(h, t);
            (vec![l; h.len()], l, grad)
        }
    };
    let grad = if head_norm.is_some() {
        normalize_backward(head_uncertainty.values(), &grad_h)
    } else {
        grad_h
    };
    Ok(ConsistencyLoss {
        loss: LossValue {
            total,
            per_pixel: DenseMap::raw(shape, per_pixel, MapKind::Real),
            gradients: Gradients {
                prediction: DenseMap::raw(shape, grad, MapKind::Real),
                noise: DenseMap::raw(shape, vec![0.0; shape.len()], MapKind::Real),
            },
        },
        unnormalized,
    })
}

/// Thresholds for flagging a collapsed noise head.
pub const TRIVIAL_MAX_STD: f64 = 1e-3;
pub const TRIVIAL_MAX_MEAN_DISTANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrivialDiagnostic {
    /// Spatial standard deviation of `sigma^2(x)`.
    pub spatial_std: f64,
    pub mean: f64,
    /// `|mean - collapse point|`; the collapse point is 1 for regression and
    /// 0 for classification.
    pub mean_distance: f64,
    pub trivial: bool,
}

/// Checks whether a noise head has collapsed to the constant that recovers
/// the unweighted task loss. The map holds `log sigma^2` in regression mode
/// and `sigma^2` in classification mode, as in [`DualHeadOutput`].
pub fn detect_trivial_solution(noise_head: &DenseMap, mode: HeadMode) -> TrivialDiagnostic {
    let variance: Vec<f64> = match mode {
        HeadMode::Regression => noise_head.values().iter().map(|s| s.exp()).collect(),
        HeadMode::Classification => noise_head.values().to_vec(),
    };
    let n = variance.len() as f64;
    let mean = variance.iter().sum::<f64>() / n;
    let spatial_std = (variance.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let collapse = match mode {
        HeadMode::Regression => 1.0,
        HeadMode::Classification => 0.0,
    };
    let mean_distance = (mean - collapse).abs();
    TrivialDiagnostic {
        spatial_std,
        mean,
        mean_distance,
        trivial: spatial_std < TRIVIAL_MAX_STD && mean_distance < TRIVIAL_MAX_MEAN_DISTANCE,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiheadTargets {
    pub aleatoric: DenseMap,
    pub epistemic: DenseMap,
    pub predictive: DenseMap,
}

/// Normalized decomposition maps used as regression targets for auxiliary
/// uncertainty heads. Constant maps normalize to zero.
pub fn multihead_targets(stack: &SampleStack) -> Result<MultiheadTargets> {
    let maps = match stack.kind() {
        MapKind::Probability => decompose_entropy(stack)?,
        MapKind::Real => decompose_variance(stack)?,
        other => {
            return Err(UqError::KindMismatch {
                expected: MapKind::Probability,
                found: other,
            })
        }
    };
    Ok(MultiheadTargets {
        aleatoric: maps.aleatoric.normalized_or_zero(),
        epistemic: maps.epistemic.normalized_or_zero(),
        predictive: maps.predictive.normalized_or_zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Origin;
    use approx::assert_abs_diff_eq;

    fn real(v: &[f64]) -> DenseMap {
        DenseMap::from_vec(1, v.len(), v.to_vec(), MapKind::Real).unwrap()
    }

    fn reg(f: &[f64], s: &[f64]) -> DualHeadOutput {
        DualHeadOutput::new(real(f), real(s), HeadMode::Regression).unwrap()
    }

    #[test]
    fn regression_loss_examples() {
        let l = het_regression_loss(&reg(&[1.0], &[0.0]), &real(&[1.0])).unwrap();
        assert_eq!(l.total, 0.0);
        let l = het_regression_loss(&reg(&[0.0], &[0.0]), &real(&[2.0])).unwrap();
        assert_eq!(l.total, 2.0);
        let l = het_regression_loss(&reg(&[0.0], &[4f64.ln()]), &real(&[2.0])).unwrap();
        assert_abs_diff_eq!(l.total, 1.193147, epsilon = 1e-6);
        assert_abs_diff_eq!(l.gradients.noise.values()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn regression_loss_errors() {
        assert!(het_regression_loss(&reg(&[0.0, 1.0], &[0.0, 0.0]), &real(&[1.0])).is_err());
        let mut out = reg(&[0.0], &[0.0]);
        out.mode = HeadMode::Classification;
        assert!(het_regression_loss(&out, &real(&[1.0])).is_err());
    }

    #[test]
    fn classification_loss_examples() {
        let labels = DenseMap::from_vec(1, 1, vec![1.0], MapKind::Label).unwrap();
        let logits = DenseMap::new(Shape::new(1, 1, 2), vec![0.3, -0.4], MapKind::Logit).unwrap();
        let (ce, _) = cross_entropy_with_grad(&[0.3, -0.4], 1);
        let l = het_classification_loss(&logits, &real(&[0.0]), &labels).unwrap();
        assert_abs_diff_eq!(l.total, ce, epsilon = 1e-12);

        // choose logits whose cross-entropy is exactly 1: z1 - z0 = -ln(e - 1)
        let gap = -(std::f64::consts::E - 1.0).ln();
        let logits = DenseMap::new(Shape::new(1, 1, 2), vec![0.0, gap], MapKind::Logit).unwrap();
        let (ce, _) = cross_entropy_with_grad(logits.pixel(0), 1);
        assert_abs_diff_eq!(ce, 1.0, epsilon = 1e-12);
        let l = het_classification_loss(&logits, &real(&[1.0]), &labels).unwrap();
        assert_abs_diff_eq!(l.total, 1.367879, epsilon = 1e-6);

        // near-zero cross-entropy leaves the log T regularizer
        let logits = DenseMap::new(Shape::new(1, 1, 2), vec![-40.0, 40.0], MapKind::Logit).unwrap();
        let l = het_classification_loss(&logits, &real(&[0.7]), &labels).unwrap();
        assert_abs_diff_eq!(l.total, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn classification_rejects_bad_labels() {
        let labels = DenseMap::from_vec(1, 1, vec![2.0], MapKind::Label).unwrap();
        let logits = DenseMap::new(Shape::new(1, 1, 2), vec![0.0, 0.0], MapKind::Logit).unwrap();
        assert!(het_classification_loss(&logits, &real(&[0.0]), &labels).is_err());
        let bin = DenseMap::from_vec(1, 1, vec![0.0], MapKind::Logit).unwrap();
        let ok = DenseMap::from_vec(1, 1, vec![1.0], MapKind::Label).unwrap();
        assert!(het_classification_loss(&bin, &real(&[0.0]), &ok).is_ok());
    }

    #[test]
    fn binary_cross_entropy_matches_two_class_softmax() {
        for &z in &[-3.0, -0.2, 0.0, 1.7, 25.0] {
            for label in 0..2 {
                let (a, ga) = cross_entropy_with_grad(&[z], label);
                let (b, gb) = cross_entropy_with_grad(&[0.0, z], label);
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                assert_abs_diff_eq!(ga[0], gb[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn consistency_examples() {
        let t = DenseMap::from_vec(1, 4, vec![0.1, 0.5, 0.3, 0.9], MapKind::Uncertainty).unwrap();
        let l = consistency_loss(&t, &t, ConsistencyVariant::Mse).unwrap();
        assert_eq!(l.loss.total, 0.0);
        assert!(!l.unnormalized);

        let zero = DenseMap::from_vec(1, 4, vec![0.0; 4], MapKind::Uncertainty).unwrap();
        let l = consistency_loss(&zero, &t, ConsistencyVariant::Mse).unwrap();
        assert!(l.unnormalized);
        let tn = t.normalized().unwrap();
        let expect = tn.values().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(l.loss.total, expect, epsilon = 1e-12);
    }

    #[test]
    fn consistency_inverse_map_brute_force() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let vals: Vec<f64> = (0..64).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let t = DenseMap::from_vec(8, 8, vals, MapKind::Uncertainty).unwrap();
        let tn = t.normalized().unwrap();
        let inv: Vec<f64> = tn.values().iter().map(|v| 1.0 - v).collect();
        let head = DenseMap::from_vec(8, 8, inv, MapKind::Uncertainty).unwrap();
        let l = consistency_loss(&head, &t, ConsistencyVariant::Mse).unwrap();
        let mut brute = 0.0;
        for v in tn.values() {
            brute += (1.0 - 2.0 * v) * (1.0 - 2.0 * v);
        }
        assert_abs_diff_eq!(l.loss.total, brute / 64.0, epsilon = 1e-12);
    }

    #[test]
    fn consistency_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream_rng(11, 0);
        let head: Vec<f64> = (0..12).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let tgt: Vec<f64> = (0..12).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let t = DenseMap::from_vec(3, 4, tgt, MapKind::Uncertainty).unwrap();
        for variant in [ConsistencyVariant::Mse, ConsistencyVariant::Ssim] {
            let h = DenseMap::from_vec(3, 4, head.clone(), MapKind::Uncertainty).unwrap();
            let g = consistency_loss(&h, &t, variant).unwrap().loss.gradients.prediction;
            for i in 0..12 {
                let eval = |d: f64| {
                    let mut v = head.clone();
                    v[i] += d;
                    let h = DenseMap::from_vec(3, 4, v, MapKind::Uncertainty).unwrap();
                    consistency_loss(&h, &t, variant).unwrap().loss.total
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert_abs_diff_eq!(g.values()[i], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn ssim_variant_is_zero_on_identity() {
        let t = DenseMap::from_vec(1, 4, vec![0.1, 0.5, 0.3, 0.9], MapKind::Uncertainty).unwrap();
        let l = consistency_loss(&t, &t, ConsistencyVariant::Ssim).unwrap();
        assert_abs_diff_eq!(l.loss.total, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trivial_solution_flags() {
        let ones = real(&[0.0; 16]);
        assert!(detect_trivial_solution(&ones, HeadMode::Regression).trivial);
        let zeros = real(&[0.0; 16]);
        assert!(detect_trivial_solution(&zeros, HeadMode::Classification).trivial);
        let spread: Vec<f64> = (0..16).map(|i| 0.5 + 1.5 * i as f64 / 15.0).collect();
        let s: Vec<f64> = spread.iter().map(|v| v.ln()).collect();
        assert!(!detect_trivial_solution(&real(&s), HeadMode::Regression).trivial);
        assert!(!detect_trivial_solution(&real(&spread), HeadMode::Classification).trivial);
    }

    #[test]
    fn multihead_targets_pass_through() {
        let maps: Vec<DenseMap> = [[0.2, 0.9, 0.4], [0.6, 0.1, 0.4]]
            .iter()
            .map(|v| DenseMap::from_vec(1, 3, v.to_vec(), MapKind::Probability).unwrap())
            .collect();
        let stack = SampleStack::new(maps, Origin::McDropout, 0).unwrap();
        let t = multihead_targets(&stack).unwrap();
        let d = decompose_entropy(&stack).unwrap();
        assert_eq!(t.epistemic, d.epistemic.normalized().unwrap());
        assert_eq!(t.aleatoric, d.aleatoric.normalized().unwrap());

        let same = vec![DenseMap::from_vec(1, 3, vec![0.2, 0.5, 0.7], MapKind::Probability)
            .unwrap(); 3];
        let stack = SampleStack::new(same, Origin::McDropout, 0).unwrap();
        let t = multihead_targets(&stack).unwrap();
        assert!(t.epistemic.values().iter().all(|&v| v == 0.0));
    }
}
