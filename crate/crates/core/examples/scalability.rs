//! Users join one at a time; nobody already registered is retrained and
//! their entries stay byte-identical.
//!
//! ```text
//! cargo run --release --example scalability
//! ```

use docl::data::{gen_blobs, split_per_user, BlobSpec};
use docl::eval::run_scalability_sweep;
use docl::TrainingConfig;

fn main() -> docl::Result<()> {
    let (train, test) = gen_blobs(&BlobSpec {
        n_classes: 9,
        per_class_count: 400,
        ..BlobSpec::default()
    })?
    .split_per_class(0.5);
    let config = TrainingConfig {
        latent_dim: 2,
        ..TrainingConfig::default()
    };
    let report = run_scalability_sweep(&split_per_user(&train), &test, &[1, 3, 5, 7, 9], &config)?;
    for n in [1, 3, 5, 7, 9] {
        let accs = report.at(n);
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{n} users: mean per-class accuracy {mean:.4}  {accs:.3?}");
    }
    println!(
        "earlier entries unchanged: {}",
        report.prior_entries_unchanged
    );
    Ok(())
}
