//! Edge-side training of a single user's one-class autoencoder.
//!
//! Everything here reads only the features it is handed; a user's model and
//! privacy profile are a pure function of their own data and [`TrainingConfig`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderParams, FeatureVector, Gradients, Scratch};
use crate::error::{check_len, Error, Result};

/// Lower bound on a fitted profile's standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// ADADELTA decay rate.
    pub rho: f64,
    /// ADADELTA conditioning constant.
    pub opt_eps: f64,
    pub latent_dim: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 50,
            batch_size: 32,
            seed: 0,
            rho: 0.95,
            opt_eps: 1e-6,
            latent_dim: 32,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs and batch_size must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::contract(format!("rho {} outside (0, 1)", self.rho)));
        }
        if !(self.opt_eps > 0.0 && self.opt_eps.is_finite()) {
            return Err(Error::contract("opt_eps must be positive"));
        }
        if self.latent_dim == 0 || self.latent_dim >= input_dim {
            return Err(Error::contract(format!(
                "latent_dim {} must be in 1..{input_dim}",
                self.latent_dim
            )));
        }
        Ok(())
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub acc_grad_sq: Gradients,
    pub acc_update_sq: Gradients,
}

impl AdadeltaState {
    pub fn new(params: &AutoencoderParams) -> Self {
        let (d, m) = (params.input_dim(), params.latent_dim());
        AdadeltaState {
            acc_grad_sq: Gradients::zeros(d, m),
            acc_update_sq: Gradients::zeros(d, m),
        }
    }
}

/// Mean and standard deviation of a user's training dissimilarities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyProfile {
    pub mu: f64,
    pub sigma: f64,
}

impl PrivacyProfile {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::contract(format!(
                "profile mean {mu} must be finite and >= 0"
            )));
        }
        if !sigma.is_finite() || sigma < SIGMA_FLOOR {
            return Err(Error::contract(format!(
                "profile sigma {sigma} must be finite and >= {SIGMA_FLOOR}"
            )));
        }
        Ok(PrivacyProfile { mu, sigma })
    }

    /// Fits a normal distribution (population standard deviation) to `samples`.
    pub fn from_dissimilarities(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset("no dissimilarities to fit".into()));
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
        PrivacyProfile::new(mu, var.sqrt().max(SIGMA_FLOOR))
    }

    /// `[mu - alpha*sigma, mu + alpha*sigma]`
    pub fn interval(&self, alpha: f64) -> (f64, f64) {
        (self.mu - alpha * self.sigma, self.mu + alpha * self.sigma)
    }
}

/// What a user uploads after training at the edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedUserModel {
    pub user_id: String,
    pub params: AutoencoderParams,
    pub profile: PrivacyProfile,
    pub training_size: usize,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(d: usize, m: usize, seed: u64) -> Result<AutoencoderParams> {
    if m == 0 || m >= d {
        return Err(Error::contract(format!(
            "representation dimension {m} must be in 1..{d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (6.0 / (d + m) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let w: Vec<f64> = (0..m * d).map(|_| dist.sample(&mut rng)).collect();
    let w_prime: Vec<f64> = (0..d * m).map(|_| dist.sample(&mut rng)).collect();
    AutoencoderParams::new(d, m, w, vec![0.0; m], w_prime, vec![0.0; d])
}

/// One ADADELTA update applied in place.
pub fn adadelta_step(
    params: &mut AutoencoderParams,
    grads: &Gradients,
    state: &mut AdadeltaState,
    rho: f64,
    opt_eps: f64,
) -> Result<()> {
    let shapes = params.tensors().map(<[f64]>::len);
    for (what, g) in [
        grads.tensors(),
        state.acc_grad_sq.tensors(),
        state.acc_update_sq.tensors(),
    ]
    .iter()
    .enumerate()
    {
        for (expected, t) in shapes.iter().zip(g) {
            check_len(
                ["gradient", "grad accumulator", "update accumulator"][what],
                *expected,
                t.len(),
            )?;
        }
    }

    let AdadeltaState {
        acc_grad_sq,
        acc_update_sq,
    } = state;
    for (((p, g), eg), ex) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(acc_grad_sq.tensors_mut())
        .zip(acc_update_sq.tensors_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            eg[i] = rho * eg[i] + (1.0 - rho) * gi * gi;
            let delta = -((ex[i] + opt_eps).sqrt() / (eg[i] + opt_eps).sqrt()) * gi;
            ex[i] = rho * ex[i] + (1.0 - rho) * delta * delta;
            p[i] += delta;
        }
    }
    Ok(())
}

/// Final parameters plus the mean per-example loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub params: AutoencoderParams,
    pub epoch_losses: Vec<f64>,
}

pub fn train_one_class(
    features: &[FeatureVector],
    config: &TrainingConfig,
) -> Result<AutoencoderParams> {
    train_with_history(features, config).map(|run| run.params)
}

/// Mini-batch ADADELTA on the mean batch BCE loss.
///
/// The batch order of epoch `e` is a shuffle drawn from stream `e + 1` of a
/// ChaCha8 generator seeded with `config.seed`; stream 0 is used for
/// initialization.
pub fn train_with_history(
    features: &[FeatureVector],
    config: &TrainingConfig,
) -> Result<TrainingRun> {
    let d = common_dim(features)?;
    config.validate(d)?;

    let mut params = init_params(d, config.latent_dim, config.seed)?;
    let mut state = AdadeltaState::new(&params);
    let mut grads = Gradients::zeros(d, config.latent_dim);
    let mut scratch = Scratch::new(d, config.latent_dim);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss +=
                    params.accumulate_gradient(features[i].as_slice(), &mut scratch, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            adadelta_step(&mut params, &grads, &mut state, config.rho, config.opt_eps)?;
        }
        epoch_losses.push(epoch_loss / features.len() as f64);
    }

    Ok(TrainingRun {
        params,
        epoch_losses,
    })
}

/// Reconstruction dissimilarity of every feature under `params`.
pub fn dissimilarities(params: &AutoencoderParams, features: &[FeatureVector]) -> Result<Vec<f64>> {
    let mut scratch = Scratch::new(params.input_dim(), params.latent_dim());
    features
        .iter()
        .map(|x| {
            check_len("profile input", params.input_dim(), x.len())?;
            Ok(params.score_slice(x.as_slice(), &mut scratch))
        })
        .collect()
}

pub fn fit_privacy_profile(
    params: &AutoencoderParams,
    features: &[FeatureVector],
) -> Result<PrivacyProfile> {
    if features.is_empty() {
        return Err(Error::EmptyDataset(
            "cannot fit a profile without features".into(),
        ));
    }
    PrivacyProfile::from_dissimilarities(&dissimilarities(params, features)?)
}

/// Full edge pipeline: train, then fit the privacy profile on the same data.
pub fn train_user(
    user_id: &str,
    features: &[FeatureVector],
    config: &TrainingConfig,
) -> Result<TrainedUserModel> {
    let params = train_one_class(features, config)?;
    let profile = fit_privacy_profile(&params, features)?;
    Ok(TrainedUserModel {
        user_id: user_id.to_string(),
        params,
        profile,
        training_size: features.len(),
    })
}

fn common_dim(features: &[FeatureVector]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::EmptyDataset("no training features".into()))?;
    let d = first.len();
    for x in features {
        check_len("training features", d, x.len())?;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = init_params(10, 3, 42).unwrap();
        let b = init_params(10, 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.b().iter().chain(a.b_prime()).all(|v| *v == 0.0));
        assert_ne!(a, init_params(10, 3, 43).unwrap());
    }

    #[test]
    fn init_respects_glorot_bound() {
        let p = init_params(4, 2, 7).unwrap();
        assert!(p
            .w()
            .iter()
            .chain(p.w_prime())
            .all(|v| (-1.0..=1.0).contains(v)));
        assert!(init_params(4, 4, 7).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_state() {
        let mut p = init_params(4, 2, 1).unwrap();
        let before = p.clone();
        let mut state = AdadeltaState::new(&p);
        state.acc_grad_sq.fill(1.0);
        state.acc_update_sq.fill(1.0);
        adadelta_step(&mut p, &Gradients::zeros(4, 2), &mut state, 0.95, 1e-6).unwrap();
        assert_eq!(p, before);
        assert!(state
            .acc_grad_sq
            .b
            .iter()
            .all(|v| (*v - 0.95).abs() < 1e-15));
        assert!(state
            .acc_update_sq
            .b
            .iter()
            .all(|v| (*v - 0.95).abs() < 1e-15));
    }

    #[test]
    fn adadelta_shape_mismatch() {
        let mut p = init_params(4, 2, 1).unwrap();
        let mut state = AdadeltaState::new(&p);
        assert!(adadelta_step(&mut p, &Gradients::zeros(5, 2), &mut state, 0.95, 1e-6).is_err());
    }

    #[test]
    fn profile_examples() {
        let p = PrivacyProfile::from_dissimilarities(&[1.0, 2.0, 3.0]).unwrap();
        assert!((p.mu - 2.0).abs() < 1e-15);
        assert!((p.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((p.sigma - 0.81650).abs() < 1e-5);

        let single = PrivacyProfile::from_dissimilarities(&[0.7]).unwrap();
        assert_eq!(single.sigma, SIGMA_FLOOR);
        let flat = PrivacyProfile::from_dissimilarities(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((flat.mu, flat.sigma), (2.0, SIGMA_FLOOR));
        assert!(PrivacyProfile::from_dissimilarities(&[]).is_err());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let cfg = TrainingConfig {
            latent_dim: 1,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            train_one_class(&[], &cfg),
            Err(Error::EmptyDataset(_))
        ));
        let p = init_params(3, 1, 0).unwrap();
        assert!(fit_privacy_profile(&p, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = TrainingConfig {
            latent_dim: 8,
            ..TrainingConfig::default()
        };
        assert!(cfg.validate(8).is_err());
        assert!(cfg.validate(9).is_ok());
        assert!(TrainingConfig {
            rho: 1.0,
            ..cfg.clone()
        }
        .validate(9)
        .is_err());
        assert!(TrainingConfig {
            batch_size: 0,
            ..cfg
        }
        .validate(9)
        .is_err());
    }
}
