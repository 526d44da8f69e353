//! Distributed one-class learning for privacy-aware upload filtering.
//!
//! Each user trains a small one-class autoencoder on their own
//! privacy-sensitive feature vectors, entirely on their own device, and
//! uploads only the learned parameters plus the mean and standard deviation
//! of its training reconstruction errors. A cloud-side [`FilterRegistry`]
//! collects these models. When someone uploads a new image, the service runs
//! its features through every registered autoencoder, attributes the image to
//! the model that reconstructs it best, and a Guard blocks it if the error
//! falls inside that model's privacy interval `[mu - alpha*sigma, mu + alpha*sigma]`
//! and the uploader is not the model's owner.
//!
//! - [`autoencoder`]: forward pass, BCE loss, gradients, dissimilarity.
//! - [`trainer`]: ADADELTA training and privacy-profile fitting at the edge.
//! - [`filter`]: the registry, argmin attribution and the Guard.
//! - [`wire`]: the `.docl.json` parameter document and the line protocol,
//!   with a threaded TCP server and a blocking client.
//! - [`data`]: IDX, feature-CSV and synthetic blob datasets.
//! - [`eval`]: metrics and experiment drivers.
//! - [`cli`]: the `docl` command line.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod autoencoder;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod trainer;
pub mod wire;

pub use autoencoder::{
    bce_loss, dissimilarity, AutoencoderParams, FeatureVector, Gradients, CLAMP_EPS,
};
pub use error::{Error, Result};
pub use filter::{Action, Decision, FilterRegistry, GuardConfig, SharedRegistry};
pub use trainer::{
    fit_privacy_profile, init_params, train_one_class, train_user, PrivacyProfile,
    TrainedUserModel, TrainingConfig, SIGMA_FLOOR,
};
pub use wire::{Message, ParamsDocument};
