//! Per-tensor normalization, 1-D K-Means codebooks, nearest-center assignment,
//! reconstruction and quantization error.
//!
//! A weight tensor `W` is first normalized to `(W - mu) / sigma` using the
//! population statistics of the tensor. Codebook centers live in that
//! normalized space, so the stored reconstruction is `sigma * center + mu`.

mod kmeans;

pub use kmeans::{
    clustering_objective, kmeans_fit, lloyd, optimal_partition, Init, KMeansConfig, KMeansFit,
};

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::WeightTensor;

/// Supported index widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits(u8);

impl Bits {
    pub const ONE: Bits = Bits(1);
    pub const TWO: Bits = Bits(2);
    pub const FOUR: Bits = Bits(4);
    pub const EIGHT: Bits = Bits(8);
    pub const ALL: [Bits; 4] = [Bits::ONE, Bits::TWO, Bits::FOUR, Bits::EIGHT];

    pub fn new(bits: u32) -> Result<Self> {
        match bits {
            1 | 2 | 4 | 8 => Ok(Bits(bits as u8)),
            other => Err(Error::UnsupportedBits(other)),
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Number of codebook entries, `2^b`.
    pub fn levels(self) -> usize {
        1usize << self.0
    }
}

impl TryFrom<u32> for Bits {
    type Error = Error;

    fn try_from(bits: u32) -> Result<Self> {
        Bits::new(bits)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mean and population standard deviation of a tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats<T> {
    pub mu: T,
    pub sigma: T,
}

/// `2^b` strictly ascending centers in normalized space, plus the statistics
/// used to map them back to weight space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    bits: Bits,
    centers: Vec<T>,
    stats: NormStats<T>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(bits: Bits, centers: Vec<T>, stats: NormStats<T>) -> Result<Self> {
        if centers.len() != bits.levels() {
            return Err(Error::LengthMismatch { expected: bits.levels(), actual: centers.len() });
        }
        if let Some(index) = centers.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateTensor("codebook centers are not strictly ascending".into()));
        }
        if !stats.mu.is_finite() || !stats.sigma.is_finite() || stats.sigma < T::zero() {
            return Err(Error::DegenerateTensor("invalid normalization statistics".into()));
        }
        Ok(Self { bits, centers, stats })
    }

    /// Fits a codebook to `w`: statistics, normalization, then K-Means.
    pub fn fit(w: &WeightTensor<T>, bits: Bits, cfg: &KMeansConfig<T>) -> Result<Self> {
        let stats = compute_stats(w)?;
        let normalized = normalize(w, stats)?;
        let fit = kmeans_fit(normalized.values(), bits, cfg)?;
        Self::new(bits, fit.centers, stats)
    }

    pub fn bits(&self) -> Bits {
        self.bits
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn stats(&self) -> NormStats<T> {
        self.stats
    }

    /// Same centers, different normalization statistics.
    pub fn with_stats(&self, stats: NormStats<T>) -> Result<Self> {
        Self::new(self.bits, self.centers.clone(), stats)
    }

    /// Center values mapped back to weight space.
    pub fn dequantized_centers(&self) -> Vec<T> {
        self.centers.iter().map(|&c| self.stats.sigma * c + self.stats.mu).collect()
    }
}

/// Codebook indices plus the reconstructed weights they stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub indices: Vec<u32>,
    pub reconstruction: Vec<T>,
}

impl<T: Scalar> Assignment<T> {
    /// Rebuilds the reconstruction from stored indices.
    pub fn from_indices(indices: Vec<u32>, cb: &Codebook<T>) -> Result<Self> {
        let levels = cb.bits().levels();
        let NormStats { mu, sigma } = cb.stats();
        let reconstruction = indices
            .iter()
            .enumerate()
            .map(|(position, &i)| {
                cb.centers()
                    .get(i as usize)
                    .map(|&c| sigma * c + mu)
                    .ok_or(Error::IndexOverflow { index: i, position, bits: cb.bits().get() })
            })
            .collect::<Result<Vec<_>>>()?;
        debug_assert!(indices.iter().all(|&i| (i as usize) < levels));
        Ok(Self { indices, reconstruction })
    }

    /// Count of elements per codebook entry.
    pub fn histogram(&self, levels: usize) -> Vec<usize> {
        let mut counts = vec![0usize; levels];
        for &i in &self.indices {
            counts[i as usize] += 1;
        }
        counts
    }
}

/// Mean and population (divide-by-N) standard deviation.
pub fn compute_stats<T: Scalar>(w: &WeightTensor<T>) -> Result<NormStats<T>> {
    stats_of(w.values())
}

pub(crate) fn stats_of<T: Scalar>(values: &[T]) -> Result<NormStats<T>> {
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    // accumulate in f64 regardless of T
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = values.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    Ok(NormStats { mu: T::of(mean), sigma: T::of(var.sqrt()) })
}

/// `(w - mu) / sigma`.
pub fn normalize<T: Scalar>(w: &WeightTensor<T>, s: NormStats<T>) -> Result<WeightTensor<T>> {
    w.with_values(normalize_values(w.values(), s)?)
}

pub(crate) fn normalize_values<T: Scalar>(values: &[T], s: NormStats<T>) -> Result<Vec<T>> {
    if !(s.sigma > T::zero()) {
        return Err(Error::DegenerateTensor("sigma is zero (constant tensor)".into()));
    }
    Ok(values.iter().map(|&v| (v - s.mu) / s.sigma).collect())
}

/// `sigma * w + mu`.
pub fn denormalize<T: Scalar>(values: &[T], s: NormStats<T>) -> Vec<T> {
    values.iter().map(|&v| s.sigma * v + s.mu).collect()
}

/// Index of the center nearest to `v`. `centers` must be ascending; equal
/// distances resolve to the smaller index.
#[inline]
pub fn nearest_center<T: Scalar>(v: T, centers: &[T]) -> usize {
    let k = centers.partition_point(|&c| c < v);
    if k == 0 {
        return 0;
    }
    if k == centers.len() {
        return k - 1;
    }
    if (v - centers[k - 1]).abs() <= (centers[k] - v).abs() {
        k - 1
    } else {
        k
    }
}

/// Nearest-center assignment for every value.
pub fn assign<T: Scalar>(values: &[T], centers: &[T]) -> Vec<u32> {
    values.iter().map(|&v| nearest_center(v, centers) as u32).collect()
}

/// Assigns `w` to `cb` using the codebook's own statistics.
pub fn quantize<T: Scalar>(w: &WeightTensor<T>, cb: &Codebook<T>) -> Result<Assignment<T>> {
    quantize_values(w.values(), cb)
}

pub(crate) fn quantize_values<T: Scalar>(values: &[T], cb: &Codebook<T>) -> Result<Assignment<T>> {
    let stats = cb.stats();
    let normalized = normalize_values(values, stats)?;
    let indices = assign(&normalized, cb.centers());
    let reconstruction =
        indices.iter().map(|&i| stats.sigma * cb.centers()[i as usize] + stats.mu).collect();
    Ok(Assignment { indices, reconstruction })
}

/// Sum of squared differences between reconstruction and original weights.
pub fn quant_error<T: Scalar>(w: &WeightTensor<T>, a: &Assignment<T>) -> Result<T> {
    squared_distance(w.values(), &a.reconstruction)
}

/// Same error measured after normalizing both sides with `stats`.
pub fn quant_error_normalized<T: Scalar>(
    w: &WeightTensor<T>,
    a: &Assignment<T>,
    stats: NormStats<T>,
) -> Result<T> {
    let lhs = normalize_values(w.values(), stats)?;
    let rhs = normalize_values(&a.reconstruction, stats)?;
    squared_distance(&lhs, &rhs)
}

pub(crate) fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum())
}
