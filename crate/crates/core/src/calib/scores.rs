//! Patch accuracy/uncertainty statistics and the three conditional-probability
//! scores: p(accurate | certain), p(uncertain | inaccurate) and PAvPU.

use serde::{Deserialize, Serialize};

use crate::calib::patches::PatchLabeling;
use crate::error::{Result, UqError};
use crate::map::DenseMap;

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 0.5;

/// How the uncertainty of a patch is reduced from its pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Reducer {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            other => Err(UqError::config(format!("unknown patch reducer `{other}`"))),
        }
    }
}

impl std::fmt::Display for Reducer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reducer::Mean => "mean",
            Reducer::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    /// Fraction of correct pixels per patch.
    pub accuracy: Vec<f64>,
    /// Normalized uncertainty per patch.
    pub uncertainty: Vec<f64>,
    pub area: Vec<usize>,
}

impl PatchStats {
    pub fn new(accuracy: Vec<f64>, uncertainty: Vec<f64>) -> Result<Self> {
        if accuracy.len() != uncertainty.len() {
            return Err(UqError::shape("accuracy and uncertainty lengths differ"));
        }
        check_unit(&accuracy, "patch accuracy")?;
        check_unit(&uncertainty, "patch uncertainty")?;
        let area = vec![1; accuracy.len()];
        Ok(PatchStats {
            accuracy,
            uncertainty,
            area,
        })
    }

    pub fn len(&self) -> usize {
        self.accuracy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accuracy.is_empty()
    }
}

fn check_unit(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(UqError::invalid(format!("{what} {v} is outside [0, 1]")));
    }
    Ok(())
}

/// Per-pixel correctness (1 where the labels agree, 0 otherwise).
pub fn correctness_map(pred: &DenseMap, gt: &DenseMap) -> Result<DenseMap> {
    pred.expect_kind(crate::map::MapKind::Label)?;
    gt.expect_kind(crate::map::MapKind::Label)?;
    if pred.shape() != gt.shape() {
        return Err(UqError::shape(format!(
            "prediction {} and ground truth {} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    let values = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(a, b)| if a == b { 1.0 } else { 0.0 })
        .collect();
    Ok(DenseMap::raw(pred.shape(), values, crate::map::MapKind::Real))
}

/// Per-image min-max normalization of an uncertainty map; a constant map
/// becomes all zeros (uniformly certain).
pub fn normalize_uncertainty(map: &DenseMap) -> DenseMap {
    map.normalized_or_zero()
}

/// Patch accuracy `a_k` (mean correctness) and uncertainty `u_k` (mean or
/// max of the pre-normalized uncertainty) over each patch.
pub fn patch_stats(
    labeling: &PatchLabeling,
    correctness: &DenseMap,
    uncertainty: &DenseMap,
    reducer: Reducer,
) -> Result<PatchStats> {
    for (m, what) in [(correctness, "correctness"), (uncertainty, "uncertainty")] {
        m.expect_single_channel(what)?;
        if m.height() != labeling.height() || m.width() != labeling.width() {
            return Err(UqError::shape(format!(
                "{what} map {} does not match the {}x{} labeling",
                m.shape(),
                labeling.height(),
                labeling.width()
            )));
        }
    }
    check_unit(correctness.values(), "correctness")?;
    check_unit(uncertainty.values(), "normalized uncertainty")?;
    let k = labeling.patch_count();
    let mut correct = vec![0.0; k];
    let mut unc = vec![0.0; k];
    let mut area = vec![0usize; k];
    for (p, (&c, &u)) in correctness.values().iter().zip(uncertainty.values()).enumerate() {
        let l = labeling.label(p);
        correct[l] += c;
        area[l] += 1;
        match reducer {
            Reducer::Mean => unc[l] += u,
            Reducer::Max => unc[l] = f64::max(unc[l], u),
        }
    }
    let accuracy = correct
        .iter()
        .zip(&area)
        .map(|(c, &a)| c / a as f64)
        .collect();
    let uncertainty = match reducer {
        Reducer::Mean => unc.iter().zip(&area).map(|(u, &a)| u / a as f64).collect(),
        Reducer::Max => unc,
    };
    Ok(PatchStats {
        accuracy,
        uncertainty,
        area,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_ac: usize,
    pub n_au: usize,
    pub n_ic: usize,
    pub n_iu: usize,
    pub h_a: f64,
    pub h_u: f64,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.n_ac + self.n_au + self.n_ic + self.n_iu
    }

    pub fn uncertain(&self) -> usize {
        self.n_au + self.n_iu
    }
}

/// Accurate iff `a_k > h_a`; uncertain iff `u_k > h_u`.
pub fn confusion_counts(stats: &PatchStats, h_a: f64, h_u: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        n_ac: 0,
        n_au: 0,
        n_ic: 0,
        n_iu: 0,
        h_a,
        h_u,
    };
    for (&a, &u) in stats.accuracy.iter().zip(&stats.uncertainty) {
        match (a > h_a, u > h_u) {
            (true, false) => c.n_ac += 1,
            (true, true) => c.n_au += 1,
            (false, false) => c.n_ic += 1,
            (false, true) => c.n_iu += 1,
        }
    }
    c
}

/// The three scores; `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub p_acc_given_cert: Option<f64>,
    pub p_unc_given_inacc: Option<f64>,
    pub pavpu: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn uncertainty_scores(c: &ConfusionCounts) -> Scores {
    Scores {
        p_acc_given_cert: ratio(c.n_ac, c.n_ac + c.n_ic),
        p_unc_given_inacc: ratio(c.n_iu, c.n_ic + c.n_iu),
        pavpu: ratio(c.n_ac + c.n_iu, c.total()),
    }
}

/// Threshold sweep used by [`binned_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMode {
    /// Sweep `h_u` over the bin midpoints with `h_a` fixed.
    #[default]
    UncertaintyOnly,
    /// Sweep `h_a = h_u` jointly over the bin midpoints.
    Joint,
}

impl std::str::FromStr for BinningMode {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" | "uncertainty_only" => Ok(BinningMode::UncertaintyOnly),
            "joint" => Ok(BinningMode::Joint),
            other => Err(UqError::config(format!("unknown binning mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for BinningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinningMode::UncertaintyOnly => "uncertainty",
            BinningMode::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: usize,
    pub counts: ConfusionCounts,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeans {
    pub p_acc_given_cert: Option<f64>,
    pub p_unc_given_inacc: Option<f64>,
    pub pavpu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mode: BinningMode,
    /// Accuracy threshold (fixed) in `UncertaintyOnly` mode.
    pub h_a: f64,
    pub rows: Vec<BinRow>,
    /// Means over the bins where each score is defined.
    pub means: ScoreMeans,
    /// Number of images pooled into the counts.
    pub images: usize,
}

impl CalibrationReport {
    pub fn bins(&self) -> usize {
        self.rows.len()
    }

    fn score_vec(&self, f: impl Fn(&Scores) -> Option<f64>) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| f(&r.scores)).collect()
    }

    pub fn p_acc_given_cert(&self) -> Vec<Option<f64>> {
        self.score_vec(|s| s.p_acc_given_cert)
    }

    pub fn p_unc_given_inacc(&self) -> Vec<Option<f64>> {
        self.score_vec(|s| s.p_unc_given_inacc)
    }

    pub fn pavpu(&self) -> Vec<Option<f64>> {
        self.score_vec(|s| s.pavpu)
    }
}

/// Midpoint of bin `b` of `bins` over `[0, 1]`.
pub fn bin_midpoint(b: usize, bins: usize) -> f64 {
    (b as f64 + 0.5) / bins as f64
}

fn defined_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn finish(mode: BinningMode, h_a: f64, counts: Vec<ConfusionCounts>, images: usize) -> CalibrationReport {
    let rows: Vec<BinRow> = counts
        .into_iter()
        .enumerate()
        .map(|(bin, counts)| BinRow {
            bin,
            scores: uncertainty_scores(&counts),
            counts,
        })
        .collect();
    let means = ScoreMeans {
        p_acc_given_cert: defined_mean(rows.iter().map(|r| r.scores.p_acc_given_cert)),
        p_unc_given_inacc: defined_mean(rows.iter().map(|r| r.scores.p_unc_given_inacc)),
        pavpu: defined_mean(rows.iter().map(|r| r.scores.pavpu)),
    };
    CalibrationReport {
        mode,
        h_a,
        rows,
        means,
        images,
    }
}

fn thresholds(mode: BinningMode, h_a: f64, b: usize, bins: usize) -> (f64, f64) {
    let mid = bin_midpoint(b, bins);
    match mode {
        BinningMode::UncertaintyOnly => (h_a, mid),
        BinningMode::Joint => (mid, mid),
    }
}

/// Sweeps the thresholds over `bins` midpoints and scores each bin.
pub fn binned_report(
    stats: &PatchStats,
    h_a: f64,
    mode: BinningMode,
    bins: usize,
) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(UqError::config("at least one bin is required"));
    }
    if !(0.0..=1.0).contains(&h_a) {
        return Err(UqError::config(format!("h_a {h_a} is outside [0, 1]")));
    }
    check_unit(&stats.uncertainty, "patch uncertainty")?;
    let counts = (0..bins)
        .map(|b| {
            let (ha, hu) = thresholds(mode, h_a, b, bins);
            confusion_counts(stats, ha, hu)
        })
        .collect();
    Ok(finish(mode, h_a, counts, 1))
}

/// Pools several per-image reports by summing their counts bin by bin and
/// rescoring.
pub fn aggregate_reports(reports: &[CalibrationReport]) -> Result<CalibrationReport> {
    let first = reports
        .first()
        .ok_or_else(|| UqError::EmptyInput("no reports to aggregate".into()))?;
    if reports
        .iter()
        .any(|r| r.bins() != first.bins() || r.mode != first.mode || r.h_a != first.h_a)
    {
        return Err(UqError::config("reports use different binning settings"));
    }
    let counts = (0..first.bins())
        .map(|b| {
            let mut c = first.rows[b].counts;
            for r in &reports[1..] {
                let o = &r.rows[b].counts;
                c.n_ac += o.n_ac;
                c.n_au += o.n_au;
                c.n_ic += o.n_ic;
                c.n_iu += o.n_iu;
            }
            c
        })
        .collect();
    let images = reports.iter().map(|r| r.images).sum();
    Ok(finish(first.mode, first.h_a, counts, images))
}
