//! Trade-off between blocking sensitive uploads and accepting harmless ones
//! as the Guard's alpha widens the interval.
//!
//! ```text
//! cargo run --release --example alpha_sweep > sweep.csv
//! ```

use docl::data::{gen_blobs, split_per_user, BlobSpec};
use docl::eval::{build_registry, run_alpha_sweep, train_users};
use docl::{FeatureVector, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> docl::Result<()> {
    let spec = BlobSpec {
        per_class_count: 600,
        ..BlobSpec::default()
    };
    let (train, test) = gen_blobs(&spec)?.split_per_class(0.5);
    let config = TrainingConfig {
        latent_dim: 2,
        ..TrainingConfig::default()
    };
    let registry = build_registry(train_users(&split_per_user(&train), &config)?)?;

    // harmless content: uniform noise images plus slightly perturbed class images
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut outliers: Vec<FeatureVector> = (0..500)
        .map(|_| FeatureVector::new((0..spec.dim).map(|_| rng.random::<f64>()).collect()))
        .collect::<docl::Result<_>>()?;
    for x in test.features.iter().step_by(4) {
        let v = x
            .as_slice()
            .iter()
            .map(|&v| (v + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0))
            .collect();
        outliers.push(FeatureVector::new(v)?);
    }

    let sweep = run_alpha_sweep(&registry, (1.0, 2.0), &test, &outliers, 11)?;
    eprintln!("argmin accuracy {:.4}", sweep.argmin_accuracy);
    sweep.write_csv(std::io::stdout().lock())
}
