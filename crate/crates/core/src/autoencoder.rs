//! Three-layer one-class autoencoder: ReLU encoder, sigmoid decoder,
//! binary cross-entropy loss with analytic gradients, and the squared-L2
//! reconstruction dissimilarity used for classification.
//!
//! Matrices are stored row-major: the encoder weight is `m x d`, the decoder
//! weight is `d x m`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Decoder outputs are clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]` before any log.
pub const CLAMP_EPS: f64 = 1e-7;

/// A feature vector with every element finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::contract(format!(
                "feature element {i} = {v} is outside [0, 1]"
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Encoder output, elementwise non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("latent values must be finite and >= 0"));
        }
        Ok(LatentVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Decoder output, elementwise in `[CLAMP_EPS, 1 - CLAMP_EPS]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction(Vec<f64>);

impl Reconstruction {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// The four learned tensors of one autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    d: usize,
    m: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    w_prime: Vec<f64>,
    b_prime: Vec<f64>,
}

/// Gradients with the same layout as [`AutoencoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub w_prime: Vec<f64>,
    pub b_prime: Vec<f64>,
}

impl Gradients {
    pub fn zeros(d: usize, m: usize) -> Self {
        Gradients {
            w: vec![0.0; m * d],
            b: vec![0.0; m],
            w_prime: vec![0.0; d * m],
            b_prime: vec![0.0; d],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w, &self.b, &self.w_prime, &self.b_prime]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w,
            &mut self.b,
            &mut self.w_prime,
            &mut self.b_prime,
        ]
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

impl AutoencoderParams {
    pub fn new(
        d: usize,
        m: usize,
        w: Vec<f64>,
        b: Vec<f64>,
        w_prime: Vec<f64>,
        b_prime: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::contract("dimensions must be positive"));
        }
        if m >= d {
            return Err(Error::contract(format!(
                "representation dimension {m} must be smaller than input dimension {d}"
            )));
        }
        check_len("encoder weight", m * d, w.len())?;
        check_len("encoder bias", m, b.len())?;
        check_len("decoder weight", d * m, w_prime.len())?;
        check_len("decoder bias", d, b_prime.len())?;
        let params = AutoencoderParams {
            d,
            m,
            w,
            b,
            w_prime,
            b_prime,
        };
        if params
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::contract("parameters must be finite"));
        }
        Ok(params)
    }

    /// All-zero parameters: every input reconstructs to `[0.5; d]`.
    pub fn zeros(d: usize, m: usize) -> Result<Self> {
        AutoencoderParams::new(
            d,
            m,
            vec![0.0; m * d],
            vec![0.0; m],
            vec![0.0; d * m],
            vec![0.0; d],
        )
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn latent_dim(&self) -> usize {
        self.m
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn w_prime(&self) -> &[f64] {
        &self.w_prime
    }

    pub fn b_prime(&self) -> &[f64] {
        &self.b_prime
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w, &self.b, &self.w_prime, &self.b_prime]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w,
            &mut self.b,
            &mut self.w_prime,
            &mut self.b_prime,
        ]
    }

    pub fn encode(&self, x: &FeatureVector) -> Result<LatentVector> {
        check_len("encode input", self.d, x.len())?;
        let mut h = vec![0.0; self.m];
        self.encode_into(x.as_slice(), &mut h);
        Ok(LatentVector(h))
    }

    pub fn decode(&self, h: &LatentVector) -> Result<Reconstruction> {
        check_len("decode input", self.m, h.0.len())?;
        let mut out = vec![0.0; self.d];
        self.decode_into(&h.0, &mut out);
        out.iter_mut().for_each(|v| *v = clamp_output(*v));
        Ok(Reconstruction(out))
    }

    pub fn reconstruct(&self, x: &FeatureVector) -> Result<Reconstruction> {
        check_len("reconstruct input", self.d, x.len())?;
        let mut h = vec![0.0; self.m];
        let mut out = vec![0.0; self.d];
        self.reconstruct_into(x.as_slice(), &mut h, &mut out);
        Ok(Reconstruction(out))
    }

    /// `bce_loss(x, reconstruct(x))` together with its gradient.
    pub fn bce_gradient(&self, x: &FeatureVector) -> Result<(f64, Gradients)> {
        check_len("gradient input", self.d, x.len())?;
        let mut scratch = Scratch::new(self.d, self.m);
        let mut grads = Gradients::zeros(self.d, self.m);
        let loss = self.accumulate_gradient(x.as_slice(), &mut scratch, &mut grads);
        Ok((loss, grads))
    }

    /// Squared-L2 distance between `x` and its reconstruction.
    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        check_len("score input", self.d, x.len())?;
        let mut scratch = Scratch::new(self.d, self.m);
        Ok(self.score_slice(x.as_slice(), &mut scratch))
    }

    pub(crate) fn score_slice(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        self.reconstruct_into(x, &mut scratch.z, &mut scratch.out);
        squared_distance(x, &scratch.out)
    }

    fn encode_into(&self, x: &[f64], h: &mut [f64]) {
        for (k, hk) in h.iter_mut().enumerate() {
            let row = &self.w[k * self.d..(k + 1) * self.d];
            let z = self.b[k] + dot(row, x);
            *hk = relu(z);
        }
    }

    /// Writes the unclamped sigmoid output.
    fn decode_into(&self, h: &[f64], out: &mut [f64]) {
        for (l, o) in out.iter_mut().enumerate() {
            let row = &self.w_prime[l * self.m..(l + 1) * self.m];
            *o = sigmoid(self.b_prime[l] + dot(row, h));
        }
    }

    fn reconstruct_into(&self, x: &[f64], h: &mut [f64], out: &mut [f64]) {
        self.encode_into(x, h);
        self.decode_into(h, out);
        out.iter_mut().for_each(|v| *v = clamp_output(*v));
    }

    /// Adds the gradient of the BCE loss at `x` into `grads` and returns the loss.
    pub(crate) fn accumulate_gradient(
        &self,
        x: &[f64],
        scratch: &mut Scratch,
        grads: &mut Gradients,
    ) -> f64 {
        let (d, m) = (self.d, self.m);
        for k in 0..m {
            let row = &self.w[k * d..(k + 1) * d];
            scratch.z[k] = self.b[k] + dot(row, x);
            scratch.h[k] = relu(scratch.z[k]);
        }
        self.decode_into(&scratch.h, &mut scratch.out);

        let mut loss = 0.0;
        scratch.dh.fill(0.0);
        for l in 0..d {
            let s = scratch.out[l];
            let xhat = clamp_output(s);
            loss -= x[l] * xhat.ln() + (1.0 - x[l]) * (1.0 - xhat).ln();
            // d/da of BCE(x, sigmoid(a)) is sigmoid(a) - x; zero where the clamp is active.
            let delta = if xhat == s { s - x[l] } else { 0.0 };
            if delta == 0.0 {
                continue;
            }
            grads.b_prime[l] += delta;
            let wrow = &self.w_prime[l * m..(l + 1) * m];
            let grow = &mut grads.w_prime[l * m..(l + 1) * m];
            for k in 0..m {
                grow[k] += delta * scratch.h[k];
                scratch.dh[k] += delta * wrow[k];
            }
        }
        for k in 0..m {
            if scratch.z[k] <= 0.0 {
                continue;
            }
            let dz = scratch.dh[k];
            grads.b[k] += dz;
            let grow = &mut grads.w[k * d..(k + 1) * d];
            for (g, xj) in grow.iter_mut().zip(x) {
                *g += dz * xj;
            }
        }
        loss
    }
}

/// Reusable buffers for the forward/backward pass.
pub(crate) struct Scratch {
    z: Vec<f64>,
    h: Vec<f64>,
    dh: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(d: usize, m: usize) -> Self {
        Scratch {
            z: vec![0.0; m],
            h: vec![0.0; m],
            dh: vec![0.0; m],
            out: vec![0.0; d],
        }
    }
}

/// Binary cross-entropy, natural log, summed over elements.
pub fn bce_loss(x: &FeatureVector, xhat: &Reconstruction) -> Result<f64> {
    check_len("bce_loss", x.len(), xhat.0.len())?;
    Ok(bce_slices(x.as_slice(), &xhat.0))
}

fn bce_slices(x: &[f64], xhat: &[f64]) -> f64 {
    -x.iter()
        .zip(xhat)
        .map(|(&t, &p)| t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        .sum::<f64>()
}

/// `sum_l (x(l) - xhat(l))^2`.
pub fn dissimilarity(x: &FeatureVector, xhat: &Reconstruction) -> Result<f64> {
    check_len("dissimilarity", x.len(), xhat.0.len())?;
    Ok(squared_distance(x.as_slice(), &xhat.0))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_output(v: f64) -> f64 {
    v.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}
