//! One user trains at the edge and writes the file they would upload.
//!
//! ```text
//! cargo run --release --example edge_training -- [out.docl.json]
//! ```

use docl::data::{gen_blobs, BlobSpec};
use docl::trainer::train_with_history;
use docl::wire::{read_params_file, write_params_file};
use docl::{fit_privacy_profile, TrainedUserModel, TrainingConfig};

fn main() -> docl::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "alice.docl.json".into());

    // alice's private images, stood in for by one blob class
    let ds = gen_blobs(&BlobSpec {
        n_classes: 1,
        dim: 32,
        per_class_count: 500,
        ..BlobSpec::default()
    })?;
    let config = TrainingConfig {
        latent_dim: 4,
        ..TrainingConfig::default()
    };
    let run = train_with_history(&ds.features, &config)?;
    for (e, loss) in run.epoch_losses.iter().enumerate().step_by(10) {
        println!("epoch {e:>3}  mean BCE {loss:.4}");
    }
    let profile = fit_privacy_profile(&run.params, &ds.features)?;
    println!(
        "privacy profile: mu={:.5} sigma={:.5}",
        profile.mu, profile.sigma
    );
    println!("blocking interval at alpha=2: {:?}", profile.interval(2.0));

    let model = TrainedUserModel {
        user_id: "alice".into(),
        params: run.params,
        profile,
        training_size: ds.len(),
    };
    write_params_file(&out, &model)?;
    let back = read_params_file(&out)?;
    assert_eq!(back, model);
    println!(
        "wrote {out} ({} bytes); only parameters leave the device",
        std::fs::metadata(&out)?.len()
    );
    Ok(())
}
