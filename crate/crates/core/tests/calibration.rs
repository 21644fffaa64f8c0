//! Patch scores against brute-force oracles and structural properties.

use proptest::prelude::*;
use uq_core::calib::{
    binned_report, confusion_counts, correctness_map, grid_patches, normalize_uncertainty,
    patch_stats, slic_superpixels, BinningMode, PatchStats, Reducer, DEFAULT_BINS,
};
use uq_core::{DenseMap, MapKind, Shape};

/// Per-pixel quadrant counts for every bin computed straight from the raw
/// maps, with no patch machinery involved.
fn per_pixel_oracle(pred: &[usize], gt: &[usize], unc: &[f64], h_a: f64) -> Vec<[usize; 4]> {
    let lo = unc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = unc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = unc
        .iter()
        .map(|u| if hi > lo { (u - lo) / (hi - lo) } else { 0.0 })
        .collect();
    (0..DEFAULT_BINS)
        .map(|b| {
            let h_u = (b as f64 + 0.5) / DEFAULT_BINS as f64;
            let mut q = [0usize; 4];
            for i in 0..pred.len() {
                let acc = if pred[i] == gt[i] { 1.0 } else { 0.0 };
                let idx = match (acc > h_a, norm[i] > h_u) {
                    (true, false) => 0,
                    (true, true) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                };
                q[idx] += 1;
            }
            q
        })
        .collect()
}

fn label_map(v: &[usize]) -> DenseMap {
    DenseMap::from_vec(8, 8, v.iter().map(|&x| x as f64).collect(), MapKind::Label).unwrap()
}

fn report_counts(pred: &[usize], gt: &[usize], unc: &[f64], h_a: f64) -> Vec<[usize; 4]> {
    let correct = correctness_map(&label_map(pred), &label_map(gt)).unwrap();
    let u = normalize_uncertainty(&DenseMap::from_vec(8, 8, unc.to_vec(), MapKind::Real).unwrap());
    let stats = patch_stats(&grid_patches(8, 8, 1).unwrap(), &correct, &u, Reducer::Mean).unwrap();
    binned_report(&stats, h_a, BinningMode::UncertaintyOnly, DEFAULT_BINS)
        .unwrap()
        .rows
        .iter()
        .map(|r| [r.counts.n_ac, r.counts.n_au, r.counts.n_ic, r.counts.n_iu])
        .collect()
}

fn instance() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<f64>)> {
    (
        prop::collection::vec(0usize..3, 64),
        prop::collection::vec(0usize..3, 64),
        prop::collection::vec(0.0f64..5.0, 64),
    )
}

fn near_midpoint(norm: &DenseMap) -> bool {
    norm.values().iter().any(|u| {
        (0..DEFAULT_BINS).any(|b| (u - (b as f64 + 0.5) / DEFAULT_BINS as f64).abs() < 1e-9)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_pixel_patches_match_per_pixel_sweep((pred, gt, unc) in instance()) {
        prop_assert_eq!(report_counts(&pred, &gt, &unc, 0.5), per_pixel_oracle(&pred, &gt, &unc, 0.5));
    }

    #[test]
    fn affine_rescaling_leaves_report_unchanged(
        (pred, gt, unc) in instance(),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
    ) {
        let scaled: Vec<f64> = unc.iter().map(|u| scale * u + shift).collect();
        let norm = normalize_uncertainty(&DenseMap::from_vec(8, 8, unc.clone(), MapKind::Real).unwrap());
        prop_assume!(!near_midpoint(&norm));
        prop_assert_eq!(report_counts(&pred, &gt, &unc, 0.5), report_counts(&pred, &gt, &scaled, 0.5));
    }

    #[test]
    fn uncertain_count_is_non_increasing_in_h_u(
        acc in prop::collection::vec(0.0f64..=1.0, 1..40),
        seed_unc in prop::collection::vec(0.0f64..=1.0, 40),
        h_a in 0.0f64..=1.0,
    ) {
        let unc = seed_unc[..acc.len()].to_vec();
        let stats = PatchStats::new(acc.clone(), unc).unwrap();
        for mode in [BinningMode::UncertaintyOnly, BinningMode::Joint] {
            let report = binned_report(&stats, h_a, mode, DEFAULT_BINS).unwrap();
            let uncertain: Vec<usize> = report.rows.iter().map(|r| r.counts.uncertain()).collect();
            prop_assert!(uncertain.windows(2).all(|w| w[1] <= w[0]), "{:?}", uncertain);
            for row in &report.rows {
                prop_assert_eq!(row.counts.total(), acc.len());
                for s in [row.scores.p_acc_given_cert, row.scores.p_unc_given_inacc, row.scores.pavpu].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&s));
                }
            }
        }
    }

    #[test]
    fn pavpu_reduces_to_accurate_fraction_when_all_certain(
        acc in prop::collection::vec(0.0f64..=1.0, 1..30),
        h_a in 0.0f64..1.0,
    ) {
        let stats = PatchStats::new(acc.clone(), vec![0.3; acc.len()]).unwrap();
        let c = confusion_counts(&stats, h_a, 1.0);
        let accurate = acc.iter().filter(|&&a| a > h_a).count() as f64 / acc.len() as f64;
        let pavpu = uq_core::calib::uncertainty_scores(&c).pavpu.unwrap();
        prop_assert!((pavpu - accurate).abs() < 1e-15);
    }

    #[test]
    fn slic_labels_are_connected_and_deterministic(
        h in 4usize..14,
        w in 4usize..14,
        n in 1usize..16,
        compactness in 0.5f64..20.0,
        raw in prop::collection::vec(0.0f64..=1.0, 14 * 14 * 3),
        rgb in any::<bool>(),
    ) {
        let c = if rgb { 3 } else { 1 };
        let image = DenseMap::new(Shape::new(h, w, c), raw[..h * w * c].to_vec(), MapKind::Real).unwrap();
        let a = slic_superpixels(&image, n, compactness, 10, 3).unwrap();
        prop_assert_eq!(a.labels().len(), h * w);
        prop_assert!(a.is_connected());
        prop_assert!(a.areas().iter().all(|&s| s > 0));
        prop_assert_eq!(a.areas().iter().sum::<usize>(), h * w);
        let b = slic_superpixels(&image, n, compactness, 10, 3).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn slic_rejects_more_segments_than_pixels() {
    let image = DenseMap::from_vec(2, 2, vec![0.0; 4], MapKind::Real).unwrap();
    assert!(slic_superpixels(&image, 5, 10.0, 10, 0).is_err());
}

#[test]
fn max_reducer_takes_patch_peak() {
    let labeling = grid_patches(2, 2, 2).unwrap();
    let correct = DenseMap::from_vec(2, 2, vec![1.0, 0.0, 1.0, 1.0], MapKind::Real).unwrap();
    let unc = DenseMap::from_vec(2, 2, vec![0.0, 0.8, 0.2, 0.2], MapKind::Real).unwrap();
    let mean = patch_stats(&labeling, &correct, &unc, Reducer::Mean).unwrap();
    let max = patch_stats(&labeling, &correct, &unc, Reducer::Max).unwrap();
    assert_eq!(mean.accuracy, vec![0.75]);
    assert!((mean.uncertainty[0] - 0.3).abs() < 1e-15);
    assert_eq!(max.uncertainty, vec![0.8]);
}
