//! Analytic gradients against central finite differences.

use rand::Rng;
use uq_core::loss::{
    consistency_loss, het_classification_loss, het_regression_loss, ConsistencyVariant,
    DualHeadOutput, HeadMode,
};
use uq_core::rng::stream_rng;
use uq_core::sampler::ebm::{contrastive_gradient, contrastive_objective, ContrastivePair, MlpEnergy};
use uq_core::sampler::mlp::{Activation, ToyMlp};
use uq_core::{DenseMap, MapKind, Shape};

const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn real(shape: Shape, v: Vec<f64>) -> DenseMap {
    DenseMap::new(shape, v, MapKind::Real).unwrap()
}

#[test]
fn regression_loss_gradients() {
    let mut rng = stream_rng(1, 0);
    let shape = Shape::new(2, 3, 1);
    for _ in 0..100 {
        let f: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = real(shape, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect());
        let loss = |f: &[f64], s: &[f64]| {
            let out = DualHeadOutput::new(real(shape, f.to_vec()), real(shape, s.to_vec()), HeadMode::Regression)
                .unwrap();
            het_regression_loss(&out, &y).unwrap()
        };
        let l = loss(&f, &s);
        for i in 0..6 {
            let (mut a, mut b) = (f.clone(), f.clone());
            a[i] += H;
            b[i] -= H;
            let fd = (loss(&a, &s).total - loss(&b, &s).total) / (2.0 * H);
            assert!(rel_err(l.gradients.prediction.values()[i], fd) < 1e-4);
            let (mut a, mut b) = (s.clone(), s.clone());
            a[i] += H;
            b[i] -= H;
            let fd = (loss(&f, &a).total - loss(&f, &b).total) / (2.0 * H);
            assert!(rel_err(l.gradients.noise.values()[i], fd) < 1e-4);
        }
    }
}

#[test]
fn classification_loss_gradients() {
    let mut rng = stream_rng(2, 0);
    for &classes in &[1usize, 3] {
        let shape = Shape::new(1, 4, classes);
        let pix = Shape::new(1, 4, 1);
        for _ in 0..100 {
            let z: Vec<f64> = (0..4 * classes).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s2: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let k = classes.max(2);
            let labels = DenseMap::new(
                pix,
                (0..4).map(|_| rng.random_range(0..k) as f64).collect(),
                MapKind::Label,
            )
            .unwrap();
            let loss = |z: &[f64], s2: &[f64]| {
                het_classification_loss(&real(shape, z.to_vec()), &real(pix, s2.to_vec()), &labels).unwrap()
            };
            let l = loss(&z, &s2);
            for i in 0..z.len() {
                let (mut a, mut b) = (z.clone(), z.clone());
                a[i] += H;
                b[i] -= H;
                let fd = (loss(&a, &s2).total - loss(&b, &s2).total) / (2.0 * H);
                assert!(rel_err(l.gradients.prediction.values()[i], fd) < 1e-4);
            }
            for i in 0..4 {
                let (mut a, mut b) = (s2.clone(), s2.clone());
                a[i] += H;
                b[i] -= H;
                let fd = (loss(&z, &a).total - loss(&z, &b).total) / (2.0 * H);
                assert!(rel_err(l.gradients.noise.values()[i], fd) < 1e-4);
            }
        }
    }
}

#[test]
fn consistency_gradients_flow_through_normalization() {
    let mut rng = stream_rng(3, 0);
    let shape = Shape::new(3, 3, 1);
    for variant in [ConsistencyVariant::Mse, ConsistencyVariant::Ssim] {
        for _ in 0..50 {
            let head: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..2.0)).collect();
            let target = real(shape, (0..9).map(|_| rng.random_range(0.0..1.0)).collect());
            let loss = |h: &[f64]| consistency_loss(&real(shape, h.to_vec()), &target, variant).unwrap();
            let l = loss(&head);
            for i in 0..9 {
                let (mut a, mut b) = (head.clone(), head.clone());
                a[i] += H;
                b[i] -= H;
                let fd = (loss(&a).loss.total - loss(&b).loss.total) / (2.0 * H);
                assert!(
                    rel_err(l.loss.gradients.prediction.values()[i], fd) < 1e-4,
                    "{variant:?} pixel {i}"
                );
            }
        }
    }
}

#[test]
fn contrastive_objective_gradient() {
    let mut rng = stream_rng(4, 0);
    let net = ToyMlp::new(&[3, 6, 1], Activation::Tanh, 0.0, 0, 9).unwrap();
    let mut energy = MlpEnergy {
        net,
        y_dim: 2,
        confinement: 0.1,
    };
    for _ in 0..100 {
        let batch: Vec<ContrastivePair> = (0..4)
            .map(|_| ContrastivePair {
                x: vec![rng.random_range(-1.0..1.0)],
                y: (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
                y_tilde: (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
            })
            .collect();
        let theta = energy.net.params();
        let perturbed: Vec<f64> = theta.iter().map(|t| t + rng.random_range(-0.3..0.3)).collect();
        energy.net.set_params(&perturbed).unwrap();
        let g = contrastive_gradient(&energy, &batch).unwrap();
        let p = energy.net.params();
        for i in 0..p.len() {
            let mut e = energy.clone();
            let mut q = p.clone();
            q[i] += H;
            e.net.set_params(&q).unwrap();
            let up = contrastive_objective(&e, &batch);
            q[i] -= 2.0 * H;
            e.net.set_params(&q).unwrap();
            let down = contrastive_objective(&e, &batch);
            let fd = (up - down) / (2.0 * H);
            assert!(rel_err(g[i], fd) < 1e-4, "param {i}: {} vs {fd}", g[i]);
        }
        energy.net.set_params(&theta).unwrap();
    }
}

#[test]
fn mlp_backward_matches_finite_differences() {
    let mut rng = stream_rng(5, 0);
    let mut net = ToyMlp::new(&[2, 5, 4, 2], Activation::Tanh, 0.2, 1, 3).unwrap();
    let params = net.params();
    for _ in 0..20 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let z = [rng.random_range(-1.0..1.0)];
        let mut drop = stream_rng(rng.random(), 0);
        let mask = net.draw_mask(&mut drop);
        let w = [0.7, -1.3];
        let objective = |n: &ToyMlp| {
            let o = n.predict(&x, &z, Some(&mask));
            w[0] * o[0] + w[1] * o[1]
        };
        let cache = net.forward(&x, &z, Some(&mask));
        let g = net.backward(&cache, &w).flat();
        for i in 0..params.len() {
            let mut q = params.clone();
            q[i] += H;
            net.set_params(&q).unwrap();
            let up = objective(&net);
            q[i] -= 2.0 * H;
            net.set_params(&q).unwrap();
            let down = objective(&net);
            net.set_params(&params).unwrap();
            assert!(rel_err(g[i], (up - down) / (2.0 * H)) < 1e-4);
        }
    }
}
