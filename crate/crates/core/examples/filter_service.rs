//! The cloud side over TCP: users register models, uploads are checked.
//!
//! ```text
//! cargo run --release --example filter_service
//! ```

use docl::data::{gen_blobs, BlobSpec};
use docl::wire::{spawn_server, Client, FilterService};
use docl::{
    train_user, FeatureVector, FilterRegistry, GuardConfig, ParamsDocument, TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> docl::Result<()> {
    let (train, test) = gen_blobs(&BlobSpec {
        n_classes: 2,
        dim: 24,
        per_class_count: 600,
        ..BlobSpec::default()
    })?
    .split_per_class(0.5);
    let config = TrainingConfig {
        latent_dim: 2,
        ..TrainingConfig::default()
    };

    let server = spawn_server(
        FilterService::new(FilterRegistry::new(), GuardConfig::default()),
        "127.0.0.1:0",
    )?;
    println!("filter listening on {}", server.local_addr());

    // each user trains locally and uploads parameters only
    for (k, user) in ["alice", "bob"].into_iter().enumerate() {
        let model = train_user(user, &train.class_features(k), &config)?;
        let id =
            Client::connect(server.local_addr())?.register(ParamsDocument::from_model(&model))?;
        println!("registered {id}");
    }

    let mut client = Client::connect(server.local_addr())?;
    let alice_photo = &test.class_features(0)[0];
    for uploader in ["alice", "bob", "carol"] {
        let d = client.classify(Some(uploader), alice_photo.as_slice())?;
        println!(
            "{uploader:>5} uploads a photo of alice's class -> {} (attributed to {:?}, d={:.4})",
            d.action,
            d.attributed_user.unwrap_or_default(),
            d.min_dissimilarity.unwrap_or(f64::NAN)
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let landscape = FeatureVector::new((0..24).map(|_| rng.random::<f64>()).collect())?;
    let d = client.classify(Some("carol"), landscape.as_slice())?;
    println!(
        "carol uploads unrelated content -> {} (in interval: {})",
        d.action, d.in_interval
    );

    match client.classify(None, &[0.5; 3]) {
        Err(e) => println!("wrong-sized upload is refused in band: {e}"),
        Ok(_) => unreachable!(),
    }
    server.shutdown();
    Ok(())
}
