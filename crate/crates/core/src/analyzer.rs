//! Weight-distribution diagnostics over training snapshots: histograms,
//! variance trend, outlier counts and divergence between adjacent snapshots.

use crate::error::{Error, Result};
use crate::quantizer::{stats_of, Codebook};
use crate::scalar::Scalar;
use crate::scheduler::{index_distribution, kl_divergence};
use crate::tensor::WeightTensor;

/// Default number of bins for adjacent-snapshot divergence.
pub const DEFAULT_KLD_BINS: usize = 64;

/// Ordered weight snapshots of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries<T> {
    snapshots: Vec<WeightTensor<T>>,
    labels: Vec<u64>,
}

impl<T: Scalar> SnapshotSeries<T> {
    pub fn new(snapshots: Vec<WeightTensor<T>>, labels: Vec<u64>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::EmptyTensor);
        }
        if labels.len() != snapshots.len() {
            return Err(Error::LengthMismatch { expected: snapshots.len(), actual: labels.len() });
        }
        let n = snapshots[0].len();
        if let Some(bad) = snapshots.iter().find(|s| s.len() != n) {
            return Err(Error::LengthMismatch { expected: n, actual: bad.len() });
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadConfig("snapshot labels must be strictly increasing".into()));
        }
        Ok(Self { snapshots, labels })
    }

    pub fn snapshots(&self) -> &[WeightTensor<T>] {
        &self.snapshots
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Uniform-width histogram.
///
/// Bins are half-open `[lo + i*w, lo + (i+1)*w)` except the last, which also
/// includes `hi`. Values outside an explicit range are clamped into the first
/// or last bin, so the counts always sum to the number of values. Without a
/// range the data min/max is used; a constant input lands entirely in bin 0.
pub fn histogram<T: Scalar>(values: &[T], bins: usize, range: Option<(T, T)>) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if bins == 0 {
        return Err(Error::BadConfig("bins must be at least 1".into()));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some(_) => return Err(Error::BadConfig("histogram range needs lo < hi".into())),
        None => min_max(values),
    };
    let mut counts = vec![0usize; bins];
    if lo == hi {
        counts[0] = values.len();
        return Ok(counts);
    }
    let width = (hi - lo) / T::of_usize(bins);
    for &v in values {
        let i = if v >= hi {
            bins - 1
        } else if v <= lo {
            0
        } else {
            ((v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
        };
        counts[i] += 1;
    }
    Ok(counts)
}

fn min_max<T: Scalar>(values: &[T]) -> (T, T) {
    values.iter().fold((values[0], values[0]), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Population variance of every snapshot.
pub fn variance_trend<T: Scalar>(s: &SnapshotSeries<T>) -> Result<Vec<T>> {
    s.snapshots()
        .iter()
        .map(|w| stats_of(w.values()).map(|st| st.sigma * st.sigma))
        .collect()
}

/// Event space in which adjacent snapshots are compared.
#[derive(Debug, Clone, PartialEq)]
pub enum EventSpace<T> {
    /// Uniform bins over the joint range of each adjacent pair.
    Bins(usize),
    /// Index distribution under a fixed codebook.
    Codebook(Codebook<T>),
}

impl<T> Default for EventSpace<T> {
    fn default() -> Self {
        EventSpace::Bins(DEFAULT_KLD_BINS)
    }
}

/// Entry `k` is `KL(dist(snapshot k+1) || dist(snapshot k))`.
pub fn epoch_kld_trend<T: Scalar>(s: &SnapshotSeries<T>, space: &EventSpace<T>) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::BadConfig("need at least two snapshots".into()));
    }
    s.snapshots()
        .windows(2)
        .map(|pair| {
            let (old, cur) = (&pair[0], &pair[1]);
            let (p_old, p_cur) = match space {
                EventSpace::Bins(bins) => {
                    let (lo0, hi0) = min_max(old.values());
                    let (lo1, hi1) = min_max(cur.values());
                    let (lo, hi) = (lo0.min(lo1), hi0.max(hi1));
                    let range = if lo < hi { Some((lo, hi)) } else { None };
                    (
                        frequencies(&histogram(old.values(), *bins, range)?),
                        frequencies(&histogram(cur.values(), *bins, range)?),
                    )
                }
                EventSpace::Codebook(cb) => (index_distribution(old, cb)?, index_distribution(cur, cb)?),
            };
            kl_divergence(&p_cur, &p_old)
        })
        .collect()
}

fn frequencies(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierStats {
    pub count: usize,
    pub fraction: f64,
}

/// Elements strictly farther than `k` standard deviations from the mean.
pub fn outlier_stats<T: Scalar>(w: &WeightTensor<T>, k: T) -> Result<OutlierStats> {
    let st = stats_of(w.values())?;
    if !(st.sigma > T::zero()) {
        return Err(Error::DegenerateTensor("sigma is zero (constant tensor)".into()));
    }
    let limit = k * st.sigma;
    let count = w.values().iter().filter(|&&v| (v - st.mu).abs() > limit).count();
    Ok(OutlierStats { count, fraction: count as f64 / w.len() as f64 })
}

/// One row of the per-snapshot analysis table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow<T> {
    pub step: u64,
    pub variance: T,
    /// Divergence from the previous snapshot; absent for the first one.
    pub kld: Option<f64>,
    pub outlier_fraction: f64,
}

/// Variance, adjacent divergence and outlier fraction (beyond `k` sigma) per snapshot.
pub fn analyze_series<T: Scalar>(s: &SnapshotSeries<T>, k: T, space: &EventSpace<T>) -> Result<Vec<AnalysisRow<T>>> {
    let variance = variance_trend(s)?;
    let kld = if s.len() >= 2 { epoch_kld_trend(s, space)? } else { Vec::new() };
    s.snapshots()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let outlier_fraction = match outlier_stats(w, k) {
                Ok(o) => o.fraction,
                Err(Error::DegenerateTensor(_)) => 0.0,
                Err(e) => return Err(e),
            };
            Ok(AnalysisRow {
                step: s.labels()[i],
                variance: variance[i],
                kld: if i == 0 { None } else { Some(kld[i - 1]) },
                outlier_fraction,
            })
        })
        .collect()
}
