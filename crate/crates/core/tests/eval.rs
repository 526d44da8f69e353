mod common;

use common::{oracle_decide, random_features};
use docl::data::{gen_blobs, split_per_user, BlobSpec};
use docl::eval::{
    build_registry, eval_acceptance, eval_classification, run_adversary_matrix, run_alpha_sweep,
    run_scalability_sweep, sweep_uploader, train_users,
};
use docl::{FeatureVector, GuardConfig, TrainingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_blobs(n_classes: usize) -> (docl::data::LabeledDataset, docl::data::LabeledDataset) {
    gen_blobs(&BlobSpec {
        n_classes,
        dim: 10,
        per_class_count: 80,
        ..BlobSpec::default()
    })
    .unwrap()
    .split_per_class(0.5)
}

fn cfg() -> TrainingConfig {
    TrainingConfig {
        epochs: 15,
        latent_dim: 2,
        ..TrainingConfig::default()
    }
}

#[test]
fn sweep_endpoints_match_brute_force() {
    let (train, test) = small_blobs(3);
    let models = train_users(&split_per_user(&train), &cfg()).unwrap();
    let reg = build_registry(models.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let outliers: Vec<FeatureVector> = (0..60).map(|_| random_features(&mut rng, 10)).collect();
    let sweep = run_alpha_sweep(&reg, (1.0, 2.0), &test, &outliers, 2).unwrap();

    for (point, alpha) in sweep.points.iter().zip([1.0, 2.0]) {
        let mut blocked = 0;
        for (x, &l) in test.features.iter().zip(&test.labels) {
            let up = sweep_uploader(&reg, l);
            let (block, idx, _, _) = oracle_decide(&models, alpha, up.as_deref(), x.as_slice());
            blocked += usize::from(block && idx == l);
        }
        let shared = outliers
            .iter()
            .filter(|x| !oracle_decide(&models, alpha, None, x.as_slice()).0)
            .count();
        assert_eq!(point.blocking_accuracy, blocked as f64 / test.len() as f64);
        assert_eq!(point.acceptance_rate, shared as f64 / outliers.len() as f64);
        let direct = eval_acceptance(&reg, &GuardConfig::new(alpha).unwrap(), &outliers).unwrap();
        assert_eq!(direct, point.acceptance_rate);
    }
    let report = eval_classification(&reg, &test).unwrap();
    assert_eq!(report.overall_accuracy, sweep.argmin_accuracy);
}

#[test]
fn adversary_matrix_shape_and_diagonal() {
    let (train, test) = small_blobs(3);
    let m = run_adversary_matrix(
        &split_per_user(&train),
        &split_per_user(&test),
        &cfg(),
        &GuardConfig::default(),
    )
    .unwrap();
    assert_eq!(m.cells.len(), 9);
    for c in &m.cells {
        assert!((0.0..=1.0).contains(&c.block_accuracy));
        if c.adversary == c.victim {
            assert_eq!(c.block_accuracy, 0.0);
        }
    }
    let one = split_per_user(&small_blobs(1).0);
    assert!(run_adversary_matrix(&one, &one, &cfg(), &GuardConfig::default()).is_err());
}

#[test]
fn scalability_keeps_earlier_entries() {
    let (train, test) = small_blobs(5);
    let r = run_scalability_sweep(&split_per_user(&train), &test, &[1, 3, 5], &cfg()).unwrap();
    assert!(r.prior_entries_unchanged);
    assert_eq!(r.at(1), vec![1.0]);
    assert_eq!(r.at(3).len(), 3);
    assert_eq!(r.at(5).len(), 5);
    assert!(run_scalability_sweep(&split_per_user(&train), &test, &[3, 1], &cfg()).is_err());
    assert!(run_scalability_sweep(&split_per_user(&train), &test, &[6], &cfg()).is_err());
}
