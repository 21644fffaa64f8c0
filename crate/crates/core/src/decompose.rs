//! Closed-form uncertainty decompositions over sampled prediction stacks.
//!
//! Classification stacks are decomposed with entropies (nats): the predictive
//! term is the entropy of the mean prediction, the aleatoric term the mean of
//! per-sample entropies, and the epistemic term their difference (the mutual
//! information between prediction and parameters). Regression stacks use
//! variances and the law of total variance.

use crate::error::{Result, UqError};
use crate::map::{
    DenseMap, MapKind, Measure, NestedSampleStack, Origin, SampleStack, Shape, UncertaintyMaps,
};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Negative epistemic values down to this magnitude are rounding noise.
pub const ROUNDING_TOLERANCE: f64 = 1e-9;
/// Negative epistemic values beyond this magnitude are reported as errors.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;

fn xlogx(p: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    p * p.ln()
}

/// Entropy of one pixel. A single channel is a Bernoulli foreground
/// probability; two or more channels form a categorical distribution.
pub fn pixel_entropy(probs: &[f64]) -> f64 {
    match probs {
        [p] => -(xlogx(*p) + xlogx(1.0 - *p)),
        ps => -ps.iter().map(|&p| xlogx(p)).sum::<f64>(),
    }
}

fn uncertainty_map(shape: Shape, values: Vec<f64>) -> DenseMap {
    DenseMap::raw(Shape::new(shape.height, shape.width, 1), values, MapKind::Uncertainty)
}

/// Per-pixel Shannon entropy in nats.
pub fn entropy_map(p: &DenseMap) -> Result<DenseMap> {
    p.expect_kind(MapKind::Probability)?;
    if p.values().iter().any(|v| v.is_nan()) {
        return Err(UqError::invalid("NaN probability"));
    }
    let shape = p.shape();
    let values = (0..shape.pixels()).map(|i| pixel_entropy(p.pixel(i))).collect();
    Ok(uncertainty_map(shape, values))
}

/// Mean accumulated as offsets from the first map, so identical maps average
/// to exactly themselves.
fn mean_of(maps: &[&DenseMap]) -> Result<DenseMap> {
    let first = maps
        .first()
        .ok_or_else(|| UqError::EmptyInput("cannot average zero maps".into()))?;
    let shape = first.shape();
    let mut acc = vec![0.0; shape.len()];
    for m in maps {
        if m.shape() != shape {
            return Err(UqError::shape(format!(
                "cannot average {} with {shape}",
                m.shape()
            )));
        }
        for ((a, v), v0) in acc.iter_mut().zip(m.values()).zip(first.values()) {
            *a += v - v0;
        }
    }
    let n = maps.len() as f64;
    acc.iter_mut()
        .zip(first.values())
        .for_each(|(a, v0)| *a = v0 + *a / n);
    Ok(DenseMap::raw(shape, acc, first.kind()))
}

/// Per-pixel arithmetic mean over the samples of a stack; kind preserved.
pub fn mean_prediction(stack: &SampleStack) -> Result<DenseMap> {
    let refs: Vec<&DenseMap> = stack.samples().iter().collect();
    mean_of(&refs)
}

fn entropy_terms(
    shape: Shape,
    predictive: Vec<f64>,
    aleatoric: Vec<f64>,
    source: Origin,
) -> Result<UncertaintyMaps> {
    let mut epistemic = Vec::with_capacity(predictive.len());
    for (i, (up, ua)) in predictive.iter().zip(&aleatoric).enumerate() {
        let ue = up - ua;
        let ue = if ue < -CONSISTENCY_TOLERANCE {
            return Err(UqError::Consistency(format!(
                "epistemic entropy {ue} at pixel {i} is negative"
            )));
        } else if (-ROUNDING_TOLERANCE..0.0).contains(&ue) {
            0.0
        } else {
            ue
        };
        epistemic.push(ue);
    }
    Ok(UncertaintyMaps {
        predictive: uncertainty_map(shape, predictive),
        aleatoric: uncertainty_map(shape, aleatoric),
        epistemic: uncertainty_map(shape, epistemic),
        measure: Measure::EntropyNats,
        source,
        aleatoric_missing: false,
    })
}

/// Mean-entropy decomposition of a probability stack.
pub fn decompose_entropy(stack: &SampleStack) -> Result<UncertaintyMaps> {
    if stack.kind() != MapKind::Probability {
        return Err(UqError::KindMismatch {
            expected: MapKind::Probability,
            found: stack.kind(),
        });
    }
    let shape = stack.shape();
    let mean = mean_prediction(stack)?;
    let predictive = entropy_map(&mean)?.into_values();
    let mut aleatoric = vec![0.0; shape.pixels()];
    for s in stack.samples() {
        for (i, a) in aleatoric.iter_mut().enumerate() {
            *a += pixel_entropy(s.pixel(i));
        }
    }
    let t = stack.len() as f64;
    aleatoric.iter_mut().for_each(|a| *a /= t);
    entropy_terms(shape, predictive, aleatoric, stack.origin)
}

/// Population variance over the maps, summed over channels per pixel.
fn spread(maps: &[&DenseMap]) -> Result<(DenseMap, Vec<f64>)> {
    let mean = mean_of(maps)?;
    let shape = mean.shape();
    let c = shape.channels;
    let mut var = vec![0.0; shape.pixels()];
    for m in maps {
        for (i, (v, mu)) in m.values().iter().zip(mean.values()).enumerate() {
            let d = v - mu;
            var[i / c] += d * d;
        }
    }
    let n = maps.len() as f64;
    var.iter_mut().for_each(|v| *v /= n);
    Ok((mean, var))
}

fn mean_heads(heads: &[&DenseMap], shape: Shape) -> Vec<f64> {
    let c = shape.channels;
    let mut acc = vec![0.0; shape.pixels()];
    for h in heads {
        for (i, v) in h.values().iter().enumerate() {
            acc[i / c] += v;
        }
    }
    let n = heads.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn check_real(kind: MapKind) -> Result<()> {
    if kind != MapKind::Real {
        return Err(UqError::KindMismatch {
            expected: MapKind::Real,
            found: kind,
        });
    }
    Ok(())
}

fn variance_terms(
    shape: Shape,
    epistemic: Vec<f64>,
    aleatoric: Option<Vec<f64>>,
    source: Origin,
) -> UncertaintyMaps {
    let aleatoric_missing = aleatoric.is_none();
    let aleatoric = aleatoric.unwrap_or_else(|| vec![0.0; epistemic.len()]);
    let predictive = epistemic.iter().zip(&aleatoric).map(|(e, a)| e + a).collect();
    UncertaintyMaps {
        predictive: uncertainty_map(shape, predictive),
        aleatoric: uncertainty_map(shape, aleatoric),
        epistemic: uncertainty_map(shape, epistemic),
        measure: Measure::Variance,
        source,
        aleatoric_missing,
    }
}

/// Variance decomposition of a regression stack. Multi-channel maps report
/// the trace of the per-pixel covariance.
pub fn decompose_variance(stack: &SampleStack) -> Result<UncertaintyMaps> {
    check_real(stack.kind())?;
    let shape = stack.shape();
    let refs: Vec<&DenseMap> = stack.samples().iter().collect();
    let (_, epistemic) = spread(&refs)?;
    let aleatoric = stack.variance_heads().map(|heads| {
        let refs: Vec<&DenseMap> = heads.iter().collect();
        mean_heads(&refs, shape)
    });
    Ok(variance_terms(shape, epistemic, aleatoric, stack.origin))
}

/// Entropy decomposition for a Bayesian latent variable model: each
/// parameter sample is first marginalized over its latent samples.
pub fn decompose_blvm_entropy(nested: &NestedSampleStack) -> Result<UncertaintyMaps> {
    if nested.kind() != MapKind::Probability {
        return Err(UqError::KindMismatch {
            expected: MapKind::Probability,
            found: nested.kind(),
        });
    }
    let shape = nested.shape();
    let group_means = nested
        .groups()
        .iter()
        .map(|g| mean_of(&g.iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let grand = mean_of(&group_means.iter().collect::<Vec<_>>())?;
    let predictive = entropy_map(&grand)?.into_values();
    let mut aleatoric = vec![0.0; shape.pixels()];
    for g in &group_means {
        for (i, a) in aleatoric.iter_mut().enumerate() {
            *a += pixel_entropy(g.pixel(i));
        }
    }
    let m = group_means.len() as f64;
    aleatoric.iter_mut().for_each(|a| *a /= m);
    entropy_terms(shape, predictive, aleatoric, Origin::External)
}

/// Law-of-total-variance decomposition for a nested regression stack.
/// Variance heads, when present, add their mean to the aleatoric term.
pub fn decompose_blvm_variance(nested: &NestedSampleStack) -> Result<UncertaintyMaps> {
    check_real(nested.kind())?;
    let shape = nested.shape();
    let mut means = Vec::with_capacity(nested.parameter_samples());
    let mut within = vec![0.0; shape.pixels()];
    for g in nested.groups() {
        let (mean, var) = spread(&g.iter().collect::<Vec<_>>())?;
        for (w, v) in within.iter_mut().zip(&var) {
            *w += v;
        }
        means.push(mean);
    }
    let m = means.len() as f64;
    within.iter_mut().for_each(|w| *w /= m);
    let (_, between) = spread(&means.iter().collect::<Vec<_>>())?;
    if let Some(heads) = nested.variance_heads() {
        let flat: Vec<&DenseMap> = heads.iter().flatten().collect();
        for (w, h) in within.iter_mut().zip(mean_heads(&flat, shape)) {
            *w += h;
        }
    }
    Ok(variance_terms(shape, between, Some(within), Origin::External))
}

/// Entropy of the single best sample (lowest loss, earliest index on ties).
pub fn best_model_aleatoric(stack: &SampleStack, losses: &[f64]) -> Result<DenseMap> {
    if losses.len() != stack.len() {
        return Err(UqError::shape(format!(
            "{} losses for {} samples",
            losses.len(),
            stack.len()
        )));
    }
    if let Some(l) = losses.iter().find(|l| l.is_nan()) {
        return Err(UqError::invalid(format!("loss {l}")));
    }
    let best = losses
        .iter()
        .enumerate()
        .fold(0, |best, (i, &l)| if l < losses[best] { i } else { best });
    entropy_map(&stack.samples()[best])
}
