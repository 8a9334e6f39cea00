//! Deterministic 1-D K-Means.
//!
//! Cold fits are seeded with the exact optimal contiguous partition of the
//! sorted values (dynamic programming over prefix sums) and then polished with
//! Lloyd iterations. When the problem is too large for the partition table the
//! seed falls back to quantile initialization. Warm starts (re-clustering from
//! existing centers) run Lloyd directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{nearest_center, Bits};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How initial centers are chosen for a cold fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Optimal contiguous partition, falling back to `Quantile` above the size budget.
    Optimal,
    /// Center `i` at the `(2i+1) / 2^(b+1)` quantile of the values.
    Quantile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig<T> {
    pub max_iter: usize,
    /// Stop once no center moves by this much or more.
    pub tol: T,
    pub init: Init,
    /// Uniform perturbation `[-jitter, jitter]` added to the initial centers. Zero disables it.
    pub jitter: T,
    pub seed: u64,
    /// Largest `levels * N` for which the optimal partition table is built.
    pub optimal_budget: usize,
}

impl<T: Scalar> Default for KMeansConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: T::of(1e-6),
            init: Init::Optimal,
            jitter: T::zero(),
            seed: 0,
            optimal_budget: 1 << 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    /// Strictly ascending.
    pub centers: Vec<T>,
    /// Clustering objective after every assignment step, including the final one.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> KMeansFit<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Sum of squared distances from each value to its nearest center.
pub fn clustering_objective<T: Scalar>(values: &[T], centers: &[T]) -> T {
    values
        .iter()
        .map(|&v| {
            let d = v - centers[nearest_center(v, centers)];
            d * d
        })
        .sum()
}

fn distinct_count<T: Scalar>(sorted: &[T]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

fn sorted_copy<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(sorted)
}

/// Fits `2^b` centers to already-normalized values.
pub fn kmeans_fit<T: Scalar>(values: &[T], bits: Bits, cfg: &KMeansConfig<T>) -> Result<KMeansFit<T>> {
    let k = bits.levels();
    let sorted = sorted_copy(values)?;
    let distinct = distinct_count(&sorted);
    if distinct < k {
        return Err(Error::DegenerateTensor(format!(
            "{distinct} distinct values cannot fill {k} clusters"
        )));
    }
    let mut init = match cfg.init {
        Init::Optimal if k.saturating_mul(sorted.len()) <= cfg.optimal_budget => {
            optimal_partition(&sorted, k)
        }
        _ => quantile_centers(&sorted, k),
    };
    if cfg.jitter > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let j = cfg.jitter.as_f64();
        for c in &mut init {
            *c += T::of(rng.random_range(-j..=j));
        }
    }
    lloyd(values, &init, cfg.max_iter, cfg.tol)
}

/// Center `i` at the `(2i+1)/(2k)` quantile, linear interpolation between order statistics.
fn quantile_centers<T: Scalar>(sorted: &[T], k: usize) -> Vec<T> {
    let last = (sorted.len() - 1) as f64;
    (0..k)
        .map(|i| {
            let pos = (2 * i + 1) as f64 / (2 * k) as f64 * last;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            let frac = T::of(pos - lo as f64);
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        })
        .collect()
}

/// Cluster means of the minimum-SSE partition of `sorted` into `k` contiguous runs.
///
/// Rows of the table are filled by divide and conquer over the split point,
/// which is monotone in the right end for squared-error costs. `O(k N log N)`.
pub fn optimal_partition<T: Scalar>(sorted: &[T], k: usize) -> Vec<T> {
    let n = sorted.len();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let mut sum = vec![0.0f64; n + 1];
    let mut sum_sq = vec![0.0f64; n + 1];
    for (i, v) in sorted.iter().enumerate() {
        let v = v.as_f64();
        sum[i + 1] = sum[i] + v;
        sum_sq[i + 1] = sum_sq[i] + v * v;
    }
    let cost = |i: usize, j: usize| -> f64 {
        let m = (j - i) as f64;
        let s = sum[j] - sum[i];
        (sum_sq[j] - sum_sq[i] - s * s / m).max(0.0)
    };

    // prev[j]: best cost of splitting sorted[..j] into (row) clusters
    let mut prev: Vec<f64> = (0..=n).map(|j| if j == 0 { 0.0 } else { cost(0, j) }).collect();
    let mut split = vec![vec![0usize; n + 1]; k];
    #[allow(clippy::needless_range_loop)]
    for row in 1..k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        solve_row(row + 1, n, row, n - 1, &prev, &cost, &mut cur, &mut arg);
        split[row] = arg;
        prev = cur;
    }

    let mut bounds = Vec::with_capacity(k + 1);
    let mut j = n;
    bounds.push(j);
    for row in (1..k).rev() {
        j = split[row][j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();
    bounds
        .windows(2)
        .map(|w| T::of((sum[w[1]] - sum[w[0]]) / (w[1] - w[0]) as f64))
        .collect()
}

// Fills cur[j] for j in [lo, hi] given the optimal split for each j lies in [opt_lo, opt_hi].
#[allow(clippy::too_many_arguments)]
fn solve_row(
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cost: &impl Fn(usize, usize) -> f64,
    cur: &mut [f64],
    arg: &mut [usize],
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut best_i = opt_lo;
    #[allow(clippy::needless_range_loop)]
    for i in opt_lo..=opt_hi.min(mid - 1) {
        let c = prev[i] + cost(i, mid);
        if c < best {
            best = c;
            best_i = i;
        }
    }
    cur[mid] = best;
    arg[mid] = best_i;
    if mid > lo {
        solve_row(lo, mid - 1, opt_lo, best_i, prev, cost, cur, arg);
    }
    solve_row(mid + 1, hi, best_i, opt_hi, prev, cost, cur, arg);
}

/// Lloyd iterations from the given centers.
///
/// Empty clusters take the value farthest from its current center. The returned
/// centers are sorted and strictly ascending.
pub fn lloyd<T: Scalar>(values: &[T], initial: &[T], max_iter: usize, tol: T) -> Result<KMeansFit<T>> {
    let k = initial.len();
    let sorted = sorted_copy(values)?;
    if k == 0 || distinct_count(&sorted) < k {
        return Err(Error::DegenerateTensor(format!(
            "{} distinct values cannot fill {k} clusters",
            distinct_count(&sorted)
        )));
    }
    if initial.iter().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateTensor("non-finite initial center".into()));
    }
    let mut centers = initial.to_vec();
    sort(&mut centers);
    let mut indices = vec![0usize; values.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let mut objective = assign_all(values, &centers, &mut indices);
        let mut counts = counts(&indices, k);
        if counts.contains(&0) {
            trace.push(objective);
            objective = fill_empty(values, &mut centers, &mut indices, &mut counts);
        }
        trace.push(objective);

        let mut sums = vec![T::zero(); k];
        for (&v, &i) in values.iter().zip(&indices) {
            sums[i] += v;
        }
        let mut shift = T::zero();
        for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            let next = s / T::of_usize(n);
            shift = shift.max((next - *c).abs());
            *c = next;
        }
        if shift < tol {
            converged = true;
            break;
        }
    }

    sort(&mut centers);
    trace.push(assign_all(values, &centers, &mut indices));
    if centers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegenerateTensor("clusters collapsed onto equal centers".into()));
    }
    Ok(KMeansFit { centers, objective_trace: trace, iterations, converged })
}

fn sort<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
}

fn assign_all<T: Scalar>(values: &[T], centers: &[T], indices: &mut [usize]) -> T {
    let mut objective = T::zero();
    for (slot, &v) in indices.iter_mut().zip(values) {
        let i = nearest_center(v, centers);
        let d = v - centers[i];
        objective += d * d;
        *slot = i;
    }
    objective
}

fn counts(indices: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0usize; k];
    for &i in indices {
        c[i] += 1;
    }
    c
}

// Moves each empty center onto the worst-served value, re-sorting and
// reassigning after every move. Returns the new objective.
fn fill_empty<T: Scalar>(values: &[T], centers: &mut [T], indices: &mut [usize], counts: &mut Vec<usize>) -> T {
    let k = centers.len();
    let mut objective = T::zero();
    // at most k moves: each one pins a center onto a value no center covered
    for _ in 0..k {
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let mut far = 0;
        let mut far_d = T::neg_infinity();
        for (pos, (&v, &i)) in values.iter().zip(indices.iter()).enumerate() {
            let d = (v - centers[i]).abs();
            if d > far_d {
                far_d = d;
                far = pos;
            }
        }
        centers[empty] = values[far];
        sort(centers);
        objective = assign_all(values, centers, indices);
        *counts = self::counts(indices, k);
    }
    if counts.contains(&0) {
        // duplicate centers can survive only when values are exhausted
        objective = assign_all(values, centers, indices);
    }
    objective
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive search over contiguous 2-partitions of the sorted values.
    fn brute_two(values: &[f64]) -> f64 {
        let mut s = values.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sse = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        (1..s.len()).map(|i| sse(&s[..i]) + sse(&s[i..])).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_pairs() {
        let fit = kmeans_fit(&[-2.0, -1.0, 1.0, 2.0], Bits::ONE, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.centers, vec![-1.5, 1.5]);
        assert!((fit.objective() - brute_two(&[-2.0, -1.0, 1.0, 2.0])).abs() < 1e-12);
    }

    #[test]
    fn point_masses() {
        let fit = kmeans_fit(&[-1.0, -1.0, 1.0, 1.0], Bits::ONE, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.centers, vec![-1.0, 1.0]);
        assert_eq!(fit.objective(), 0.0);
    }

    #[test]
    fn constant_is_degenerate() {
        for bits in Bits::ALL {
            let r = kmeans_fit(&[0.5f64; 300], bits, &KMeansConfig::default());
            assert!(matches!(r, Err(Error::DegenerateTensor(_))));
        }
    }

    #[test]
    fn quantile_init_can_stall_where_optimal_does_not() {
        // Lloyd from quartiles settles on {x0..x3 | x4, x5}; the optimum isolates x0.
        let v = [-1.97589552, -0.09260787, -0.07837189, 0.12679699, 0.89894703, 1.12113126];
        let quant = KMeansConfig { init: Init::Quantile, ..KMeansConfig::default() };
        let stalled = kmeans_fit(&v, Bits::ONE, &quant).unwrap();
        let best = kmeans_fit(&v, Bits::ONE, &KMeansConfig::default()).unwrap();
        assert!((best.objective() - brute_two(&v)).abs() < 1e-12);
        assert!(stalled.objective() > best.objective() + 1.0);
    }

    #[test]
    fn empty_cluster_is_refilled() {
        // every initial center sits below the data, so three clusters start empty
        let v = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
        let fit = lloyd(&v, &[-4.0, -3.0, -2.0, -1.0], 100, 1e-9).unwrap();
        assert_eq!(fit.centers.len(), 4);
        assert!(fit.centers.windows(2).all(|w| w[0] < w[1]));
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn optimal_partition_small_cases() {
        assert_eq!(optimal_partition(&[1.0, 2.0, 3.0], 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(optimal_partition(&[0.0, 0.0, 10.0, 10.0], 2), vec![0.0, 10.0]);
        assert_eq!(optimal_partition(&[4.0, 5.0], 1), vec![4.5]);
    }

    #[test]
    fn jitter_is_seeded() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 10.0).collect();
        let cfg = KMeansConfig { jitter: 0.1, seed: 9, init: Init::Quantile, ..KMeansConfig::default() };
        let a = kmeans_fit(&v, Bits::TWO, &cfg).unwrap();
        let b = kmeans_fit(&v, Bits::TWO, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_fit() {
        let v: Vec<f32> = (0..100).map(|i| (i as f32 * 0.37).sin()).collect();
        let fit = kmeans_fit(&v, Bits::FOUR, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.centers.len(), 16);
    }
}
