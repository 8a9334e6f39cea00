//! Low-bit weight quantization for learned prompts.
//!
//! Per-tensor standardization followed by 1-D K-Means codebooks, a
//! divergence-driven re-clustering scheduler for quantization-aware training,
//! straight-through gradients, compact bit-packed storage, distribution
//! diagnostics and a small synthetic prompt-tuning harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*32`/`*64` aliases below pin the common types.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod error;
pub mod harness;
pub mod io;
pub mod packing;
pub mod quantizer;
pub mod scalar;
pub mod scheduler;
pub mod ste;
pub mod tensor;

pub use error::{Error, Result};
pub use quantizer::{
    assign, compute_stats, denormalize, kmeans_fit, nearest_center, normalize, quant_error, quant_error_normalized,
    quantize, Assignment, Bits, Codebook, Init, KMeansConfig, KMeansFit, NormStats,
};
pub use scalar::Scalar;
pub use scheduler::{CacState, DecisionReason, ErrorSpace, SchedulerConfig, SchedulerDecision};
pub use ste::{add_gaussian_noise, ste_backward, ste_forward, GaussianNoise, LatentWeights, NoiseConfig};
pub use tensor::WeightTensor;

pub type WeightTensor32 = WeightTensor<f32>;
pub type WeightTensor64 = WeightTensor<f64>;
pub type Codebook32 = Codebook<f32>;
pub type Codebook64 = Codebook<f64>;
pub type Assignment32 = Assignment<f32>;
pub type Assignment64 = Assignment<f64>;
pub type CacState32 = CacState<f32>;
pub type CacState64 = CacState<f64>;
