//! Full MNIST pipeline: ten users each train a 784-32-784 one-class
//! autoencoder on their own digit, the registry classifies the 10K test set.
//!
//! ```text
//! cargo run --release --example mnist_filter -- data/mnist [per_class] [epochs]
//! ```
//!
//! The directory must hold the four uncompressed IDX files
//! (`train-images-idx3-ubyte`, `train-labels-idx1-ubyte`, `t10k-...`).

use std::path::PathBuf;
use std::time::Instant;

use docl::data::{load_idx, split_per_user};
use docl::eval::{build_registry, eval_classification, train_users};
use docl::TrainingConfig;

fn main() -> docl::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let per_class: Option<usize> = args.next().map(|s| s.parse().expect("per_class"));
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epochs"));

    let mut train = load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )?;
    if let Some(n) = per_class {
        train = train.take_per_class(n);
    }
    println!("training images per user: {:?}", train.per_class_counts);

    let config = TrainingConfig {
        epochs,
        ..TrainingConfig::default()
    };
    let started = Instant::now();
    let models = train_users(&split_per_user(&train), &config)?;
    println!(
        "trained {} users in {:.1?}",
        models.len(),
        started.elapsed()
    );
    for m in &models {
        println!(
            "  {}: mu={:.3} sigma={:.3}",
            m.user_id, m.profile.mu, m.profile.sigma
        );
    }

    let registry = build_registry(models)?;
    let report = eval_classification(&registry, &test)?;
    println!("overall accuracy {:.4}", report.overall_accuracy);
    for (k, acc) in &report.per_class_accuracy {
        println!("  digit {k}: {acc:.4}");
    }
    Ok(())
}
