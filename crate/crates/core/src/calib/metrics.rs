//! Pixel accuracy and auxiliary task metrics (F-measure, MAE).

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind};

/// Weight of precision against recall in the F-measure.
pub const F_BETA_SQUARED: f64 = 0.3;
/// Foreground threshold applied to probabilities (`p >= threshold`).
pub const FOREGROUND_THRESHOLD: f64 = 0.5;

fn check_pair(pred: &DenseMap, gt: &DenseMap) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(UqError::shape(format!(
            "prediction {} and ground truth {} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.shape().is_empty() {
        return Err(UqError::EmptyInput("empty maps".into()));
    }
    Ok(())
}

/// Fraction of pixels whose predicted label equals the ground truth,
/// `sum_i n_ii / sum_i t_i`.
pub fn pixel_accuracy(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    pred.expect_kind(MapKind::Label)?;
    gt.expect_kind(MapKind::Label)?;
    check_pair(pred, gt)?;
    let correct = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / pred.values().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    /// `None` when precision and recall are both zero or undefined.
    pub f_beta: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mae: f64,
}

/// `F_beta = (1 + b^2) P R / (b^2 P + R)`.
pub fn f_beta(precision: f64, recall: f64, beta_squared: f64) -> Option<f64> {
    let den = beta_squared * precision + recall;
    (den > 0.0).then(|| (1.0 + beta_squared) * precision * recall / den)
}

/// Binary saliency-style metrics of a foreground probability map.
pub fn task_metrics(pred: &DenseMap, gt: &DenseMap) -> Result<TaskMetrics> {
    pred.expect_kind(MapKind::Probability)?;
    gt.expect_kind(MapKind::Label)?;
    pred.expect_single_channel("prediction")?;
    check_pair(pred, gt)?;
    gt.check_labels(2)?;
    let n = pred.values().len() as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    let mut abs = 0.0;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        abs += (p - g).abs();
        let fg = p >= FOREGROUND_THRESHOLD;
        match (fg, g == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64);
    let f = match (precision, recall) {
        (Some(p), Some(r)) => f_beta(p, r, F_BETA_SQUARED),
        _ => None,
    };
    Ok(TaskMetrics {
        f_beta: f,
        precision,
        recall,
        mae: abs / n,
    })
}
