//! Every user in turn trains on a victim's data as well as their own and
//! re-registers; the matrix shows how often the victim's images are still
//! blocked when the adversary uploads them.
//!
//! ```text
//! cargo run --release --example adversary_matrix -- [n_classes]
//! ```

use docl::data::{gen_blobs, split_per_user, BlobSpec};
use docl::eval::run_adversary_matrix;
use docl::{GuardConfig, TrainingConfig};

fn main() -> docl::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map_or(3, |s| s.parse().expect("n_classes"));
    let spec = BlobSpec {
        n_classes: n,
        per_class_count: 1200,
        style_rank: 4,
        style_gain: 6.0,
        ..BlobSpec::default()
    };
    let (train, test) = gen_blobs(&spec)?.split_per_class(0.5);
    let config = TrainingConfig {
        epochs: 200,
        latent_dim: 4,
        ..TrainingConfig::default()
    };
    let m = run_adversary_matrix(
        &split_per_user(&train),
        &split_per_user(&test),
        &config,
        &GuardConfig::default(),
    )?;

    print!("adv\\vic");
    (0..n).for_each(|v| print!("{v:>8}"));
    println!();
    for a in 0..n {
        print!("{a:>7}");
        (0..n).for_each(|v| print!("{:>8.3}", m.get(a, v).block_accuracy));
        println!();
    }
    Ok(())
}
