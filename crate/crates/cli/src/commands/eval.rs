//! `uq eval`: patch-level uncertainty scores over binned thresholds.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use uq_core::calib::{
    aggregate_reports, binned_report, correctness_map, grid_patches, normalize_uncertainty,
    patch_stats, pixel_accuracy, slic_superpixels, task_metrics, CalibrationReport, PatchLabeling,
    TaskMetrics,
};
use uq_core::io::ReadOptions;
use uq_core::{DenseMap, MapKind};

use crate::commands::{load_map, write_json, RunContext};
use crate::config::{Patching, RunConfig, Task};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// How the prediction files are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredKind {
    /// Integer class labels.
    #[default]
    Label,
    /// Foreground probabilities (one channel) or class probabilities;
    /// labels are `p >= 0.5` or the arg-max.
    Probability,
}

impl std::str::FromStr for PredKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "label" => Ok(PredKind::Label),
            "probability" => Ok(PredKind::Probability),
            other => Err(CliError::usage(format!("unknown prediction kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub pred: Vec<PathBuf>,
    pub gt: Vec<PathBuf>,
    pub uncertainty: Vec<PathBuf>,
    /// Images for superpixel patching, one per prediction.
    pub image: Vec<PathBuf>,
    pub pred_kind: PredKind,
    pub scale_u8: bool,
}

/// One image's inputs, already decoded.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub pred: DenseMap,
    pub gt: DenseMap,
    pub uncertainty: DenseMap,
    pub image: Option<DenseMap>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageReport {
    pub index: usize,
    pub patch_count: usize,
    pub pixel_accuracy: f64,
    /// Present for binary probability predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskMetrics>,
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub patching: String,
    pub reducer: String,
    pub aggregate: CalibrationReport,
    pub images: Vec<ImageReport>,
}

/// Hard labels from a prediction map.
pub fn labels_of(pred: &DenseMap) -> CliResult<DenseMap> {
    match pred.kind() {
        MapKind::Label => Ok(pred.clone()),
        MapKind::Probability => {
            let s = pred.shape();
            let labels = (0..s.pixels())
                .map(|i| {
                    let p = pred.pixel(i);
                    if p.len() == 1 {
                        if p[0] >= uq_core::calib::metrics::FOREGROUND_THRESHOLD {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        let best = (0..p.len()).fold(0, |b, c| if p[c] > p[b] { c } else { b });
                        best as f64
                    }
                })
                .collect();
            Ok(DenseMap::from_vec(s.height, s.width, labels, MapKind::Label)?)
        }
        other => Err(CliError::usage(format!(
            "predictions must be labels or probabilities, got {other}"
        ))),
    }
}

fn labeling(cfg: &RunConfig, seed: u64, img: &EvalImage) -> CliResult<PatchLabeling> {
    let (h, w) = (img.gt.height(), img.gt.width());
    match cfg.patching {
        Patching::Grid(size) => Ok(grid_patches(h, w, size)?),
        Patching::Slic(n) => {
            let image = img
                .image
                .as_ref()
                .ok_or_else(|| CliError::usage("slic patching needs an image per prediction"))?;
            if image.height() != h || image.width() != w {
                return Err(CliError::usage(format!(
                    "image {} does not match the {h}x{w} ground truth",
                    image.shape()
                )));
            }
            Ok(slic_superpixels(image, n, cfg.compactness, cfg.slic_iterations, seed)?)
        }
    }
}

/// Per-image reports plus the pooled aggregate (counts summed over images).
pub fn evaluate_images(images: &[EvalImage], cfg: &RunConfig, seed: u64) -> CliResult<EvalReport> {
    if images.is_empty() {
        return Err(CliError::usage("nothing to evaluate"));
    }
    let mut reports = Vec::with_capacity(images.len());
    for (index, img) in images.iter().enumerate() {
        let labels = labels_of(&img.pred)?;
        let correct = correctness_map(&labels, &img.gt)?;
        img.uncertainty.expect_single_channel("uncertainty map")?;
        let unc = normalize_uncertainty(&img.uncertainty);
        let patches = labeling(cfg, seed, img)?;
        let stats = patch_stats(&patches, &correct, &unc, cfg.reducer)?;
        let report = binned_report(&stats, cfg.h_a, cfg.binning, cfg.bins)?;
        let task = (img.pred.kind() == MapKind::Probability && img.pred.channels() == 1)
            .then(|| task_metrics(&img.pred, &img.gt))
            .transpose()?;
        reports.push(ImageReport {
            index,
            patch_count: patches.patch_count(),
            pixel_accuracy: pixel_accuracy(&labels, &img.gt)?,
            task,
            report,
        });
    }
    let per: Vec<CalibrationReport> = reports.iter().map(|r| r.report.clone()).collect();
    Ok(EvalReport {
        patching: cfg.patching.to_string(),
        reducer: cfg.reducer.to_string(),
        aggregate: aggregate_reports(&per)?,
        images: reports,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per bin; undefined scores are left empty.
pub fn report_csv(report: &CalibrationReport) -> String {
    let mut out = String::from("bin,h_a,h_u,n_ac,n_au,n_ic,n_iu,p_acc_given_cert,p_unc_given_inacc,pavpu\n");
    for row in &report.rows {
        let c = &row.counts;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.bin,
            c.h_a,
            c.h_u,
            c.n_ac,
            c.n_au,
            c.n_ic,
            c.n_iu,
            cell(row.scores.p_acc_given_cert),
            cell(row.scores.p_unc_given_inacc),
            cell(row.scores.pavpu)
        )
        .unwrap();
    }
    out
}

pub fn run_eval(args: &EvalArgs, ctx: &RunContext) -> CliResult<Manifest> {
    let n = args.pred.len();
    if n == 0 || args.gt.len() != n || args.uncertainty.len() != n {
        return Err(CliError::usage(format!(
            "need matching --pred/--gt/--uncertainty lists, got {}/{}/{}",
            n,
            args.gt.len(),
            args.uncertainty.len()
        )));
    }
    if !args.image.is_empty() && args.image.len() != n {
        return Err(CliError::usage(format!("{} images for {n} predictions", args.image.len())));
    }
    let mut w = ctx.writer(Task::Eval)?;
    w.set(
        "pred_kind",
        match args.pred_kind {
            PredKind::Label => "label",
            PredKind::Probability => "probability",
        },
    );
    w.set("scale_u8", args.scale_u8);
    let opts = |kind| ReadOptions {
        kind,
        scale_u8: args.scale_u8,
    };
    let pred_kind = match args.pred_kind {
        PredKind::Label => MapKind::Label,
        PredKind::Probability => MapKind::Probability,
    };
    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        images.push(EvalImage {
            pred: load_map(&mut w, &args.pred[i], opts(pred_kind))?,
            gt: load_map(&mut w, &args.gt[i], opts(MapKind::Label))?,
            uncertainty: load_map(&mut w, &args.uncertainty[i], opts(MapKind::Real))?,
            image: match args.image.get(i) {
                Some(p) => Some(load_map(&mut w, p, opts(MapKind::Real))?),
                None => None,
            },
        });
    }
    let report = evaluate_images(&images, &ctx.cfg, ctx.seed)?;
    w.write("report.csv", report_csv(&report.aggregate).as_bytes())?;
    write_json(&mut w, "report.json", &report)?;
    w.note("uncertainty maps are min-max normalized per image before patch reduction");
    w.finish()
}
