//! Independent straight-line oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numeric code; the helpers only use
//! its public constructors and accessors.

#![allow(dead_code)]

use docl::{AutoencoderParams, FeatureVector, PrivacyProfile, TrainedUserModel};
use rand::Rng;

pub const CLAMP: f64 = 1e-7;

/// Forward pass written out loop by loop: returns (z, h, a, xhat).
pub fn forward(p: &AutoencoderParams, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (d, m) = (p.input_dim(), p.latent_dim());
    let (w, b, wp, bp) = (p.w(), p.b(), p.w_prime(), p.b_prime());
    let mut z = vec![0.0; m];
    for j in 0..m {
        let mut s = b[j];
        for l in 0..d {
            s += w[j * d + l] * x[l];
        }
        z[j] = s;
    }
    let h: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let mut a = vec![0.0; d];
    let mut xhat = vec![0.0; d];
    for l in 0..d {
        let mut s = bp[l];
        for j in 0..m {
            s += wp[l * m + j] * h[j];
        }
        a[l] = s;
        let sig = 1.0 / (1.0 + (-s).exp());
        xhat[l] = sig.max(CLAMP).min(1.0 - CLAMP);
    }
    (z, h, a, xhat)
}

pub fn bce(x: &[f64], xhat: &[f64]) -> f64 {
    let mut s = 0.0;
    for (xi, yi) in x.iter().zip(xhat) {
        s -= xi * yi.ln() + (1.0 - xi) * (1.0 - yi).ln();
    }
    s
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        s += (a - b) * (a - b);
    }
    s
}

pub fn oracle_dissimilarity(p: &AutoencoderParams, x: &[f64]) -> f64 {
    sq_dist(x, &forward(p, x).3)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_features(rng: &mut impl Rng, d: usize) -> FeatureVector {
    FeatureVector::new(uniform_vec(rng, d, 0.0, 1.0)).unwrap()
}

pub fn random_params(rng: &mut impl Rng, d: usize, m: usize, scale: f64) -> AutoencoderParams {
    AutoencoderParams::new(
        d,
        m,
        uniform_vec(rng, m * d, -scale, scale),
        uniform_vec(rng, m, -scale, scale),
        uniform_vec(rng, d * m, -scale, scale),
        uniform_vec(rng, d, -scale, scale),
    )
    .unwrap()
}

/// A registrable model with random parameters and a profile centred near
/// typical dissimilarities so both Guard outcomes occur.
pub fn random_model(rng: &mut impl Rng, id: &str, d: usize, m: usize) -> TrainedUserModel {
    let params = random_params(rng, d, m, 1.5);
    let mu = rng.random_range(0.0..(d as f64 * 0.3));
    let sigma = rng.random_range(0.01..(d as f64 * 0.1));
    TrainedUserModel {
        user_id: id.to_string(),
        params,
        profile: PrivacyProfile::new(mu, sigma).unwrap(),
        training_size: rng.random_range(1..100),
    }
}

/// Brute-force decision: (block?, attributed index, min dissimilarity, in interval).
pub fn oracle_decide(
    models: &[TrainedUserModel],
    alpha: f64,
    uploader: Option<&str>,
    x: &[f64],
) -> (bool, usize, f64, bool) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in models.iter().enumerate() {
        let d = oracle_dissimilarity(&m.params, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    let prof = &models[best].profile;
    let inside = prof.mu - alpha * prof.sigma <= best_d && best_d <= prof.mu + alpha * prof.sigma;
    let id = &models[best].user_id;
    let owner = match id.find('#') {
        Some(i) => &id[..i],
        None => id.as_str(),
    };
    let owns = uploader == Some(owner);
    (inside && !owns, best, best_d, inside)
}
