//! `uq simulate`: synthetic data -> toy model -> sample stack ->
//! decomposition -> evaluation against the known noise, in one
//! reproducible run.

use serde::Serialize;
use uq_core::calib::CalibrationReport;
use uq_core::io::{map_to_array, nested_to_array, stack_to_array, NpyArray};
use uq_core::loss::{detect_trivial_solution, HeadMode, TrivialDiagnostic};
use uq_core::rng::{self, derive_seed};
use uq_core::sampler::ensemble::{
    deep_ensemble_train, mc_dropout_stack, snapshot_stack, train_regressor, ModelSpec, Objective,
    SnapshotTrainer, TrainConfig,
};
use uq_core::sampler::grid::{FeatureGrid, OutputHead};
use uq_core::sampler::langevin::{abp_learn, AbpConfig, Example, LangevinConfig};
use uq_core::sampler::mlp::{Activation, ToyMlp};
use uq_core::sampler::segmenter::{train_segmenter, SegSample, SegmenterConfig};
use uq_core::sampler::synthetic::{make_synthetic, RegressionData, X_RANGE};
use uq_core::sampler::DatasetKind;
use uq_core::{
    decompose_blvm_variance, decompose_entropy, decompose_variance, mean_prediction, DenseMap,
    MapKind, NestedSampleStack, SampleStack, UncertaintyMaps,
};

use crate::commands::eval::{evaluate_images, report_csv, EvalImage, EvalReport};
use crate::commands::{write_json, write_map_with_preview, RunContext, PREVIEW_NOTE};
use crate::config::{RunConfig, SamplerKind, Task};
use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, RunWriter};

/// Runs `$e`; on error writes the partial manifest naming `$stage`.
macro_rules! stage {
    ($w:ident, $stage:literal, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Err($w.fail($stage, CliError::from(e))),
        }
    };
}

/// Seed offsets of the pipeline stages, so changing one stage's draws never
/// shifts another's.
mod component {
    pub const SAMPLING: u64 = 101;
    pub const IMAGES: u64 = 102;
}

#[derive(Debug, Serialize)]
pub struct RegressionSummary {
    pub dataset: String,
    pub sampler: String,
    /// Maps in the stack (members, checkpoints or draws).
    pub samples: usize,
    pub final_train_loss: Option<f64>,
    pub mean_predictive: f64,
    pub mean_aleatoric: f64,
    pub mean_epistemic: f64,
    /// Correlation of the aleatoric map with the analytic noise variance;
    /// undefined when the analytic profile is constant.
    pub aleatoric_pearson_r: Option<f64>,
    pub trivial: TrivialDiagnostic,
}

#[derive(Debug, Serialize)]
pub struct SegmentationSummary {
    pub dataset: String,
    pub images: usize,
    pub final_train_loss: Option<f64>,
    pub mean_epistemic: f64,
    /// Mean squared deviation between the normalized head uncertainty and
    /// the normalized sampled aleatoric map, averaged over images.
    pub head_vs_sampled_msd: f64,
    /// Correlation of the sampled aleatoric map with the true flip rate,
    /// pooled over images.
    pub aleatoric_flip_pearson_r: Option<f64>,
    pub calibration: CalibrationReport,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

pub fn msd_normalized(a: &DenseMap, b: &DenseMap) -> f64 {
    let (a, b) = (a.normalized_or_zero(), b.normalized_or_zero());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.values().len() as f64
}

/// Cell midpoints of `n` equal cells over the input range.
pub fn evaluation_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = X_RANGE;
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

pub fn run_simulate(ctx: &RunContext) -> CliResult<Manifest> {
    let mut w = ctx.writer(Task::Simulate)?;
    w.note(PREVIEW_NOTE);
    match ctx.cfg.dataset {
        DatasetKind::BlobSegmentation2d => simulate_segmentation(ctx, w),
        _ => simulate_regression(ctx, w),
    }
}

fn train_config(cfg: &RunConfig, seed: u64, objective: Objective) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        objective,
        optimizer: cfg.optimizer,
        lr_decay: cfg.lr_decay,
        warmup_epochs: cfg.warmup_epochs,
        seed,
    }
}

fn write_array(w: &mut RunWriter, name: &str, array: &NpyArray) -> CliResult<()> {
    w.write(name, &array.to_bytes())
}

fn write_stack(w: &mut RunWriter, stack: &SampleStack) -> CliResult<()> {
    write_array(w, "stack.npy", &stack_to_array(stack))?;
    if let Some(heads) = stack.variance_heads() {
        let heads = SampleStack::new(heads.to_vec(), stack.origin, stack.seed)?;
        write_array(w, "heads.npy", &stack_to_array(&heads))?;
    }
    Ok(())
}

/// Nested stack from a latent-variable generator: `samples` dropout draws,
/// each with `latent_samples` prior draws of `z`, independently per input.
/// Every nested sample carries the generator's observation variance.
fn generator_stack(gen: &ToyMlp, grid: &FeatureGrid, cfg: &RunConfig, seed: u64) -> CliResult<NestedSampleStack> {
    let mut masks = rng::stream_rng(seed, rng::stream::DROPOUT);
    let mut latents = rng::stream_rng(seed, rng::stream::LATENT);
    let shape = grid.shape(1);
    let mut groups = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let pixel_masks: Vec<Vec<f64>> = (0..grid.pixels()).map(|_| gen.draw_mask(&mut masks)).collect();
        let mut group = Vec::with_capacity(cfg.latent_samples);
        for _ in 0..cfg.latent_samples {
            let values = (0..grid.pixels())
                .map(|i| {
                    let z = rng::normal_vec(&mut latents, gen.latent_dim());
                    gen.predict(grid.feature(i), &z, Some(&pixel_masks[i]))[0]
                })
                .collect();
            group.push(DenseMap::new(shape, values, MapKind::Real)?);
        }
        groups.push(group);
    }
    let heads = vec![vec![DenseMap::filled(shape, cfg.sigma2, MapKind::Real)?; cfg.latent_samples]; cfg.samples];
    Ok(NestedSampleStack::new(groups)?.with_variance_heads(heads)?)
}

enum Sampled {
    Flat(SampleStack),
    Nested(NestedSampleStack),
}

fn sample_regression(
    cfg: &RunConfig,
    seed: u64,
    data: &RegressionData,
    grid: &FeatureGrid,
) -> CliResult<(Sampled, Option<f64>)> {
    let hetero = train_config(cfg, seed, Objective::Heteroscedastic);
    let sampling_seed = derive_seed(seed, component::SAMPLING);
    let head = OutputHead::DualRegression;
    Ok(match cfg.sampler {
        SamplerKind::McDropout => {
            let mut model = ModelSpec::dual_head(&cfg.hidden, cfg.dropout_rate).build(seed)?;
            let history = train_regressor(&mut model, data, &hetero, |_, _| {})?;
            let stack = mc_dropout_stack(&model, grid, head, cfg.samples, sampling_seed)?;
            (Sampled::Flat(stack), history.last().copied())
        }
        SamplerKind::DeepEnsemble => {
            let seeds: Vec<u64> = (0..cfg.members as u64).map(|m| derive_seed(seed, m)).collect();
            let spec = ModelSpec::dual_head(&cfg.hidden, 0.0);
            let (_, stack) = deep_ensemble_train(&spec, data, &hetero, &seeds, grid, head)?;
            (Sampled::Flat(stack), None)
        }
        SamplerKind::Snapshot => {
            let trainer = SnapshotTrainer {
                model: ModelSpec::dual_head(&cfg.hidden, 0.0).build(seed)?,
                data,
                cfg: hetero,
            };
            let (_, stack) = snapshot_stack(trainer, cfg.snapshot_every, grid, head)?;
            (Sampled::Flat(stack), None)
        }
        SamplerKind::Abp => {
            let mut widths = vec![1];
            widths.extend(&cfg.hidden);
            widths.push(1);
            let gen = ToyMlp::new(&widths, Activation::Tanh, cfg.dropout_rate, cfg.latent_dim, seed)?;
            let examples: Vec<Example> = data
                .x
                .iter()
                .zip(&data.y)
                .map(|(&x, &y)| Example { x: vec![x], y: vec![y] })
                .collect();
            let langevin = LangevinConfig {
                steps: cfg.langevin_steps,
                step_size: cfg.langevin_step_size,
                burn_in: cfg.burn_in,
                thinning: cfg.thinning,
                seed,
                noise_scale_override: None,
            };
            let abp = AbpConfig {
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                learning_rate: cfg.learning_rate,
                sigma2: cfg.sigma2,
                seed,
            };
            let gen = abp_learn(&gen, &examples, &langevin, &abp)?;
            (Sampled::Nested(generator_stack(&gen, grid, cfg, sampling_seed)?), None)
        }
    })
}

fn simulate_regression(ctx: &RunContext, mut w: RunWriter) -> CliResult<Manifest> {
    let cfg = &ctx.cfg;
    let xs = evaluation_grid(cfg.grid_points);
    let grid = FeatureGrid::from_points(&xs);
    let dataset = stage!(w, "data", make_synthetic(cfg.dataset, cfg.points, ctx.seed));
    let data = dataset.regression().expect("regression dataset");
    let truth: Vec<f64> = match cfg.dataset {
        DatasetKind::HeteroRegression1d => xs
            .iter()
            .map(|&x| uq_core::sampler::synthetic::hetero_noise_std(x).powi(2))
            .collect(),
        _ => vec![uq_core::sampler::synthetic::HOMO_NOISE_STD.powi(2); xs.len()],
    };
    let (sampled, final_loss) = stage!(w, "sample", sample_regression(cfg, ctx.seed, data, &grid));
    let sample_count = match &sampled {
        Sampled::Flat(stack) => stack.len(),
        Sampled::Nested(nested) => nested.parameter_samples() * nested.latent_samples(),
    };
    let maps: UncertaintyMaps = match &sampled {
        Sampled::Flat(stack) => {
            stage!(w, "write", write_stack(&mut w, stack));
            stage!(w, "decompose", decompose_variance(stack))
        }
        Sampled::Nested(nested) => {
            stage!(w, "write", write_array(&mut w, "stack.npy", &nested_to_array(nested)));
            stage!(w, "decompose", decompose_blvm_variance(nested))
        }
    };
    let truth_map = stage!(w, "evaluate", DenseMap::from_vec(1, xs.len(), truth.clone(), MapKind::Real));
    let log_aleatoric: Vec<f64> = maps.aleatoric.values().iter().map(|v| v.max(1e-300).ln()).collect();
    let log_head = stage!(w, "evaluate", DenseMap::from_vec(1, xs.len(), log_aleatoric, MapKind::Real));
    let summary = RegressionSummary {
        dataset: cfg.dataset.to_string(),
        sampler: cfg.sampler.to_string(),
        samples: sample_count,
        final_train_loss: final_loss,
        mean_predictive: maps.predictive.mean(),
        mean_aleatoric: maps.aleatoric.mean(),
        mean_epistemic: maps.epistemic.mean(),
        aleatoric_pearson_r: pearson(maps.aleatoric.values(), &truth),
        trivial: detect_trivial_solution(&log_head, HeadMode::Regression),
    };
    let grid_map = stage!(w, "write", DenseMap::from_vec(1, xs.len(), xs, MapKind::Real));
    stage!(w, "write", write_array(&mut w, "grid_x.npy", &map_to_array(&grid_map)));
    stage!(w, "write", write_array(&mut w, "truth_variance.npy", &map_to_array(&truth_map)));
    for (name, map) in [
        ("U_p", &maps.predictive),
        ("U_a", &maps.aleatoric),
        ("U_e", &maps.epistemic),
    ] {
        stage!(w, "write", write_map_with_preview(&mut w, name, map));
    }
    stage!(w, "write", write_json(&mut w, "summary.json", &summary));
    if matches!(cfg.sampler, SamplerKind::DeepEnsemble | SamplerKind::Snapshot) {
        w.note("deep-ensemble and snapshot members train without dropout; dropout_rate applies to mc_dropout and abp");
    }
    w.finish()
}

fn simulate_segmentation(ctx: &RunContext, mut w: RunWriter) -> CliResult<Manifest> {
    let cfg = &ctx.cfg;
    if cfg.sampler != SamplerKind::McDropout {
        return Err(w.fail(
            "config",
            CliError::usage(format!(
                "the blob task samples with mc_dropout, `{}` is not available for it",
                cfg.sampler
            )),
        ));
    }
    let mut blobs = Vec::with_capacity(cfg.images);
    let mut samples = Vec::with_capacity(cfg.images);
    for k in 0..cfg.images as u64 {
        let seed = derive_seed(derive_seed(ctx.seed, component::IMAGES), k);
        let d = stage!(w, "data", make_synthetic(cfg.dataset, cfg.image_size, seed));
        let b = d.blobs().expect("blob dataset").clone();
        samples.push(stage!(w, "data", SegSample::new(&b.image, b.labels.clone(), cfg.seg_radius)));
        blobs.push(b);
    }
    let seg_cfg = SegmenterConfig {
        hidden: cfg.hidden.clone(),
        radius: cfg.seg_radius,
        dropout_rate: cfg.dropout_rate,
        epochs: cfg.seg_epochs,
        learning_rate: cfg.seg_learning_rate,
        consistency_weight: cfg.consistency_weight,
        consistency_variant: cfg.consistency_variant,
        target_samples: cfg.target_samples,
        target_refresh: cfg.target_refresh,
        seed: ctx.seed,
    };
    let (model, history) = stage!(w, "train", train_segmenter(&samples, &seg_cfg));
    let mut eval_images = Vec::with_capacity(samples.len());
    let mut msd = 0.0;
    let mut epistemic = 0.0;
    let (mut pooled_a, mut pooled_flip) = (Vec::new(), Vec::new());
    let sampling_seed = derive_seed(ctx.seed, component::SAMPLING);
    for (k, (s, b)) in samples.iter().zip(&blobs).enumerate() {
        let stack = stage!(w, "sample", model.mc_stack(&s.grid, cfg.samples, derive_seed(sampling_seed, k as u64)));
        let maps = stage!(w, "decompose", decompose_entropy(&stack));
        let head = model.dual_output(&s.grid).log_variance;
        msd += msd_normalized(&head, &maps.aleatoric);
        epistemic += maps.epistemic.mean();
        pooled_a.extend_from_slice(maps.aleatoric.values());
        pooled_flip.extend_from_slice(b.flip_rate.values());
        let dir = format!("image_{k}");
        stage!(w, "write", write_array(&mut w, &format!("{dir}/stack.npy"), &stack_to_array(&stack)));
        for (name, map) in [
            ("image", &b.image),
            ("labels", &b.labels),
            ("flip_rate", &b.flip_rate),
            ("head_sigma2", &head),
            ("U_p", &maps.predictive),
            ("U_a", &maps.aleatoric),
            ("U_e", &maps.epistemic),
        ] {
            stage!(w, "write", write_map_with_preview(&mut w, &format!("{dir}/{name}"), map));
        }
        eval_images.push(EvalImage {
            pred: stage!(w, "evaluate", mean_prediction(&stack)),
            gt: b.clean_labels.clone(),
            uncertainty: maps.predictive,
            image: Some(b.image.clone()),
        });
    }
    let report: EvalReport = stage!(w, "evaluate", evaluate_images(&eval_images, cfg, ctx.seed));
    let n = samples.len() as f64;
    let summary = SegmentationSummary {
        dataset: cfg.dataset.to_string(),
        images: samples.len(),
        final_train_loss: history.last().copied(),
        mean_epistemic: epistemic / n,
        head_vs_sampled_msd: msd / n,
        aleatoric_flip_pearson_r: pearson(&pooled_a, &pooled_flip),
        calibration: report.aggregate.clone(),
    };
    stage!(w, "write", w.write("report.csv", report_csv(&report.aggregate).as_bytes()));
    stage!(w, "write", write_json(&mut w, "report.json", &report));
    stage!(w, "write", write_json(&mut w, "summary.json", &summary));
    w.note("evaluation uses the clean blob masks as ground truth and predictive entropy as the uncertainty map");
    w.finish()
}
