mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rfcd_core::synthesis::upsample_blocks;
use rfcd_core::{
    evaluate, generate_latent_scene, plant_changes, roc_auc, simulate_observation, ChangeSpec,
    DegradationModel, NoiseModel, SceneSpec,
};

fn scene(seed: u64) -> SceneSpec {
    SceneSpec {
        width: 64,
        height: 64,
        band_count: 3,
        region_count: 6,
        signature_scale: 1.0,
        seed,
    }
}

#[test]
fn change_support_is_the_truth() {
    for seed in 0..5 {
        let x1 = generate_latent_scene(&scene(seed)).unwrap();
        let spec = ChangeSpec {
            changed_fraction: 0.1,
            blob_count: 4,
            magnitude: 0.5,
        };
        let (x2, truth) = plant_changes(&x1, &spec, seed).unwrap();
        let norms = (&x2 - &x1).column_norms();
        for (n, t) in norms.iter().zip(&truth) {
            assert_eq!(*n > 0.0, *t);
        }
    }
}

#[test]
fn random_scores_give_chance_auc() {
    let x1 = generate_latent_scene(&scene(1)).unwrap();
    let spec = ChangeSpec {
        changed_fraction: 0.1,
        blob_count: 4,
        magnitude: 0.5,
    };
    let (_, truth) = plant_changes(&x1, &spec, 1).unwrap();
    let mut scores: Vec<f64> = (0..truth.len()).map(|i| i as f64).collect();
    scores.shuffle(&mut rng(5));
    let (roc, auc) = roc_auc(&scores, &truth).unwrap();
    let auc = auc.unwrap();
    assert!((0.45..=0.55).contains(&auc), "{auc}");
    assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
}

#[test]
fn near_separable_scores() {
    let mut rng = rng(8);
    let truth: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.2)).collect();
    let scores: Vec<f64> = truth
        .iter()
        .map(|&t| t as u8 as f64 + rng.random_range(-1e-3..1e-3))
        .collect();
    let report = evaluate(&truth, Some(&scores), &truth).unwrap();
    assert!(report.auc.unwrap() >= 0.99);
    assert_eq!(
        (report.precision, report.recall, report.f1),
        (1.0, 1.0, 1.0)
    );
    assert_eq!(
        report.true_positives
            + report.false_positives
            + report.true_negatives
            + report.false_negatives,
        1000
    );
}

#[test]
fn noiseless_observation_is_the_forward_model() {
    let x = generate_latent_scene(&scene(2)).unwrap();
    let tiny = NoiseModel::isotropic(3, 1e-300).unwrap();
    let y = simulate_observation(&x, &DegradationModel::identity(), &tiny, 0).unwrap();
    assert!(rel_err(y.matrix(), x.matrix()) < 1e-140);
}

#[test]
fn simulated_noise_variance() {
    let spec = SceneSpec {
        width: 400,
        height: 250,
        band_count: 2,
        region_count: 3,
        signature_scale: 1.0,
        seed: 4,
    };
    let x = generate_latent_scene(&spec).unwrap();
    let noise = NoiseModel::isotropic(2, 0.3).unwrap();
    let y = simulate_observation(&x, &DegradationModel::identity(), &noise, 9).unwrap();
    let d = &y - &x;
    for row in d.matrix().row_iter() {
        let mean = row.mean();
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (row.len() - 1) as f64;
        assert!((var - 0.3).abs() <= 0.05 * 0.3, "{var}");
    }
}

proptest! {
    #[test]
    fn block_replication_keeps_area_fraction(
        cells in prop::collection::vec(any::<bool>(), 1..64),
        width in 1usize..8,
        block in 1usize..5,
    ) {
        let height = cells.len() / width;
        prop_assume!(height > 0);
        let coarse = &cells[..width * height];
        let fine = upsample_blocks(coarse, width, height, block);
        prop_assert_eq!(fine.len(), coarse.len() * block * block);
        let count = |v: &[bool]| v.iter().filter(|b| **b).count();
        prop_assert_eq!(count(&fine), count(coarse) * block * block);
    }
}
