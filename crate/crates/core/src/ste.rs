//! Straight-through estimator plumbing and Gaussian weight noise.
//!
//! The forward pass sees only the quantized reconstruction; the backward pass
//! hands the gradient with respect to that reconstruction to the latent
//! full-precision weights unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quantizer::{quantize, Assignment, Codebook};
use crate::scalar::Scalar;
use crate::tensor::WeightTensor;

/// Full-precision weights being trained, plus the quantized view used in the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWeights<T> {
    latent: WeightTensor<T>,
    forward_view: Assignment<T>,
}

impl<T: Scalar> LatentWeights<T> {
    pub fn new(latent: WeightTensor<T>, cb: &Codebook<T>) -> Result<Self> {
        let forward_view = quantize(&latent, cb)?;
        Ok(Self { latent, forward_view })
    }

    pub fn latent(&self) -> &WeightTensor<T> {
        &self.latent
    }

    pub fn forward_view(&self) -> &Assignment<T> {
        &self.forward_view
    }

    /// Re-quantizes against `cb`, e.g. after the scheduler replaced the codebook.
    pub fn refresh(&mut self, cb: &Codebook<T>) -> Result<()> {
        self.forward_view = quantize(&self.latent, cb)?;
        Ok(())
    }

    /// Plain gradient step on the latent weights, then re-quantization.
    pub fn apply_gradient(&mut self, grad_latent: &[T], lr: T, cb: &Codebook<T>) -> Result<()> {
        if grad_latent.len() != self.latent.len() {
            return Err(Error::LengthMismatch { expected: self.latent.len(), actual: grad_latent.len() });
        }
        let next = self.latent.values().iter().zip(grad_latent).map(|(&w, &g)| w - lr * g).collect();
        self.latent = self.latent.with_values(next)?;
        self.refresh(cb)
    }
}

/// Quantized weights for downstream compute.
pub fn ste_forward<T: Scalar>(lw: &LatentWeights<T>, cb: &Codebook<T>) -> Result<WeightTensor<T>> {
    let a = quantize(lw.latent(), cb)?;
    lw.latent().with_values(a.reconstruction)
}

/// Identity pass-through of the gradient onto the latent weights.
pub fn ste_backward<T: Scalar>(grad_wrt_quantized: &[T], latent_len: usize) -> Result<Vec<T>> {
    if grad_wrt_quantized.len() != latent_len {
        return Err(Error::LengthMismatch { expected: latent_len, actual: grad_wrt_quantized.len() });
    }
    Ok(grad_wrt_quantized.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation of the additive Gaussian noise.
    pub std: f64,
    pub seed: u64,
    /// Fresh noise on every optimization step (otherwise once at initialization).
    pub per_step: bool,
}

impl NoiseConfig {
    pub fn new(std: f64, seed: u64) -> Result<Self> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::BadConfig(format!("noise std must be finite and >= 0, got {std}")));
        }
        Ok(Self { std, seed, per_step: true })
    }
}

/// Seeded stream of i.i.d. Gaussian perturbations.
///
/// Backed by ChaCha8 and the ziggurat normal sampler from `rand_distr`, both
/// of which produce identical sequences on every platform.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    std: f64,
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    pub fn new(cfg: &NoiseConfig) -> Self {
        Self { std: cfg.std, rng: ChaCha8Rng::seed_from_u64(cfg.seed) }
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// `values + eps`; a zero std returns the input untouched and draws nothing.
    pub fn perturb<T: Scalar>(&mut self, values: &[T]) -> Vec<T> {
        if self.std == 0.0 {
            return values.to_vec();
        }
        values
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                v + T::of(self.std * z)
            })
            .collect()
    }
}

/// One-shot noise injection with a fresh generator seeded from `cfg.seed`.
pub fn add_gaussian_noise<T: Scalar>(w: &WeightTensor<T>, cfg: &NoiseConfig) -> Result<WeightTensor<T>> {
    if !(cfg.std >= 0.0) {
        return Err(Error::BadConfig(format!("noise std must be >= 0, got {}", cfg.std)));
    }
    w.with_values(GaussianNoise::new(cfg).perturb(w.values()))
}
