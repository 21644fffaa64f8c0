use proptest::prelude::*;
use uq_core::{
    decompose_blvm_entropy, decompose_blvm_variance, decompose_entropy, decompose_variance,
    DenseMap, MapKind, NestedSampleStack, Origin, SampleStack, Shape,
};

fn bernoulli_stack(t: usize, pixels: usize) -> impl Strategy<Value = SampleStack> {
    prop::collection::vec(prop::collection::vec(0.0f64..=1.0, pixels), t).prop_map(move |maps| {
        let maps = maps
            .into_iter()
            .map(|v| DenseMap::from_vec(1, pixels, v, MapKind::Probability).unwrap())
            .collect();
        SampleStack::new(maps, Origin::External, 0).unwrap()
    })
}

fn categorical_stack(t: usize, pixels: usize, classes: usize) -> impl Strategy<Value = SampleStack> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, pixels * classes), t).prop_map(
        move |maps| {
            let maps = maps
                .into_iter()
                .map(|raw| {
                    let v: Vec<f64> = raw
                        .chunks(classes)
                        .flat_map(|c| {
                            let s: f64 = c.iter().sum();
                            c.iter().map(move |x| x / s)
                        })
                        .collect();
                    DenseMap::new(Shape::new(1, pixels, classes), v, MapKind::Probability).unwrap()
                })
                .collect();
            SampleStack::new(maps, Origin::External, 0).unwrap()
        },
    )
}

fn real_stack(t: usize, pixels: usize) -> impl Strategy<Value = (SampleStack, Vec<Vec<f64>>)> {
    (
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, pixels), t),
        prop::collection::vec(prop::collection::vec(0.0f64..5.0, pixels), t),
    )
        .prop_map(move |(means, vars)| {
            let maps = means
                .iter()
                .map(|v| DenseMap::from_vec(1, pixels, v.clone(), MapKind::Real).unwrap())
                .collect();
            (SampleStack::new(maps, Origin::External, 0).unwrap(), vars)
        })
}

/// Population variance by the two-pass formula.
fn pop_variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

proptest! {
    #[test]
    fn entropy_jensen_gap_and_additivity(stack in (2usize..8).prop_flat_map(|t| bernoulli_stack(t, 6))) {
        let u = decompose_entropy(&stack).unwrap();
        for i in 0..6 {
            let (p, a, e) = (u.predictive.values()[i], u.aleatoric.values()[i], u.epistemic.values()[i]);
            prop_assert!(p >= a - 1e-12);
            prop_assert!(e >= 0.0);
            prop_assert!((e - (p - a)).abs() <= 1e-9);
        }
    }

    #[test]
    fn categorical_additivity(stack in (2usize..6).prop_flat_map(|t| categorical_stack(t, 4, 3))) {
        let u = decompose_entropy(&stack).unwrap();
        for i in 0..4 {
            let (p, a, e) = (u.predictive.values()[i], u.aleatoric.values()[i], u.epistemic.values()[i]);
            prop_assert!((e - (p - a)).abs() <= 1e-9);
            prop_assert!(p <= 3f64.ln() + 1e-12);
        }
    }

    #[test]
    fn variance_additivity_and_oracle((stack, vars) in (2usize..8).prop_flat_map(|t| real_stack(t, 5))) {
        let heads: Vec<DenseMap> = vars
            .iter()
            .map(|v| DenseMap::from_vec(1, 5, v.clone(), MapKind::Real).unwrap())
            .collect();
        let with_heads = stack.clone().with_variance_heads(heads).unwrap();
        let u = decompose_variance(&with_heads).unwrap();
        for i in 0..5 {
            let column: Vec<f64> = stack.samples().iter().map(|m| m.values()[i]).collect();
            let oracle_e = pop_variance(&column);
            let oracle_a = vars.iter().map(|v| v[i]).sum::<f64>() / vars.len() as f64;
            prop_assert!((u.epistemic.values()[i] - oracle_e).abs() <= 1e-9 * oracle_e.max(1.0));
            prop_assert!((u.aleatoric.values()[i] - oracle_a).abs() <= 1e-12 * oracle_a.max(1.0));
            let p = u.predictive.values()[i];
            prop_assert!((p - (u.epistemic.values()[i] + u.aleatoric.values()[i])).abs() <= 1e-9 * p.max(1.0));
        }
        let bare = decompose_variance(&stack).unwrap();
        prop_assert!(bare.aleatoric_missing);
    }

    #[test]
    fn sample_order_does_not_matter(stack in bernoulli_stack(5, 4), rot in 0usize..5) {
        let mut maps = stack.samples().to_vec();
        maps.rotate_left(rot);
        maps.swap(0, 4);
        let permuted = SampleStack::new(maps, Origin::External, 0).unwrap();
        let a = decompose_entropy(&stack).unwrap();
        let b = decompose_entropy(&permuted).unwrap();
        for (x, y) in a.epistemic.values().iter().zip(b.epistemic.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn law_of_total_variance(m in 1usize..5, s in 1usize..5, values in prop::collection::vec(-5.0f64..5.0, 4 * 4 * 3)) {
        let groups: Vec<Vec<DenseMap>> = (0..m)
            .map(|g| {
                (0..s)
                    .map(|k| {
                        let off = (g * s + k) * 3;
                        DenseMap::from_vec(1, 3, values[off..off + 3].to_vec(), MapKind::Real).unwrap()
                    })
                    .collect()
            })
            .collect();
        let nested = NestedSampleStack::new(groups).unwrap();
        let u = decompose_blvm_variance(&nested).unwrap();
        for i in 0..3 {
            let flat: Vec<f64> = (0..m * s).map(|j| values[j * 3 + i]).collect();
            let oracle = pop_variance(&flat);
            prop_assert!((u.predictive.values()[i] - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }
    }

    #[test]
    fn blvm_entropy_is_additive(values in prop::collection::vec(0.0f64..=1.0, 3 * 2 * 4)) {
        let groups: Vec<Vec<DenseMap>> = (0..3)
            .map(|g| {
                (0..2)
                    .map(|k| {
                        let off = (g * 2 + k) * 4;
                        DenseMap::from_vec(2, 2, values[off..off + 4].to_vec(), MapKind::Probability).unwrap()
                    })
                    .collect()
            })
            .collect();
        let u = decompose_blvm_entropy(&NestedSampleStack::new(groups).unwrap()).unwrap();
        for i in 0..4 {
            let (p, a, e) = (u.predictive.values()[i], u.aleatoric.values()[i], u.epistemic.values()[i]);
            prop_assert!(e >= 0.0);
            prop_assert!((p - a - e).abs() <= 1e-9);
        }
    }
}

#[test]
fn flat_blvm_matches_plain_entropy() {
    // With one latent draw per parameter sample the nested form reduces to
    // the plain decomposition.
    let maps: Vec<DenseMap> = [0.1, 0.5, 0.8]
        .iter()
        .map(|&p| DenseMap::from_vec(1, 1, vec![p], MapKind::Probability).unwrap())
        .collect();
    let plain = decompose_entropy(&SampleStack::new(maps.clone(), Origin::External, 0).unwrap()).unwrap();
    let nested = NestedSampleStack::new(maps.into_iter().map(|m| vec![m]).collect()).unwrap();
    let blvm = decompose_blvm_entropy(&nested).unwrap();
    assert!((plain.predictive.values()[0] - blvm.predictive.values()[0]).abs() < 1e-12);
}
