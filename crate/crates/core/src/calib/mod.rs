//! Uncertainty quality evaluation over image patches.

pub mod metrics;
pub mod patches;
pub mod scores;

pub use metrics::{f_beta, pixel_accuracy, task_metrics, TaskMetrics, F_BETA_SQUARED};
pub use patches::{grid_patches, slic_superpixels, PatchLabeling, PatchMethod};
pub use scores::{
    aggregate_reports, bin_midpoint, binned_report, confusion_counts, correctness_map,
    normalize_uncertainty, patch_stats, uncertainty_scores, BinRow, BinningMode,
    CalibrationReport, ConfusionCounts, PatchStats, Reducer, ScoreMeans, Scores, DEFAULT_BINS,
    DEFAULT_ACCURACY_THRESHOLD,
};
