//! Constrained adaptive clustering: decides when a codebook is re-fitted
//! during training.
//!
//! The scheduler caches the index distribution observed at the last
//! re-cluster. Once at least `t_min` steps have passed it compares the current
//! index distribution against the cached one with KL divergence and re-fits
//! the codebook (warm-started from the current centers) when the divergence
//! exceeds `t_kl`. An optional gate additionally requires the quantization
//! error to have grown since the last re-cluster.

use crate::error::{Error, Result};
use crate::quantizer::{
    clustering_objective, compute_stats, lloyd, normalize_values, quant_error, quant_error_normalized,
    quantize, Codebook,
};
use crate::scalar::Scalar;
use crate::tensor::WeightTensor;

/// Additive smoothing applied to both distributions before taking the KL divergence.
pub const KL_SMOOTHING: f64 = 1e-8;

/// Space in which the optional error gate measures quantization error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorSpace {
    #[default]
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig<T> {
    /// Minimum number of steps between re-clusters.
    pub t_min: u64,
    /// KL threshold in nats.
    pub t_kl: f64,
    /// Also require the quantization error to have increased.
    pub error_gate: bool,
    pub error_space: ErrorSpace,
    /// Lloyd budget for warm-started refits.
    pub max_iter: usize,
    pub tol: T,
}

impl<T: Scalar> Default for SchedulerConfig<T> {
    fn default() -> Self {
        Self {
            t_min: 50,
            t_kl: 0.01,
            error_gate: false,
            error_space: ErrorSpace::Raw,
            max_iter: 100,
            tol: T::of(1e-6),
        }
    }
}

impl<T: Scalar> SchedulerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.t_min == 0 {
            return Err(Error::BadConfig("t_min must be positive".into()));
        }
        if !(self.t_kl > 0.0) {
            return Err(Error::BadConfig("t_kl must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionReason {
    IntervalNotReached,
    BelowThreshold,
    ErrorGateBlocked,
    Triggered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerDecision<T> {
    pub recluster: bool,
    /// Zero when the interval check short-circuits.
    pub kl: f64,
    pub error_now: T,
    pub reason: DecisionReason,
    /// Normalized-space clustering objective before and after the refit (triggered steps only).
    pub objective_before: Option<T>,
    pub objective_after: Option<T>,
}

/// Scheduler memory for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CacState<T> {
    config: SchedulerConfig<T>,
    p_old: Vec<f64>,
    steps_since: u64,
    last_error: T,
}

impl<T: Scalar> CacState<T> {
    /// Starts tracking from the codebook that was just fitted to `w`.
    pub fn new(config: SchedulerConfig<T>, w: &WeightTensor<T>, cb: &Codebook<T>) -> Result<Self> {
        config.validate()?;
        let p_old = index_distribution(w, cb)?;
        let last_error = measure_error(config.error_space, w, cb)?;
        Ok(Self { config, p_old, steps_since: 0, last_error })
    }

    pub fn config(&self) -> &SchedulerConfig<T> {
        &self.config
    }

    pub fn p_old(&self) -> &[f64] {
        &self.p_old
    }

    pub fn steps_since(&self) -> u64 {
        self.steps_since
    }

    pub fn last_error(&self) -> T {
        self.last_error
    }

    /// Advances the scheduler by one training step. On a trigger, `cb` is replaced by the refit.
    pub fn step(&mut self, w: &WeightTensor<T>, cb: &mut Codebook<T>) -> Result<SchedulerDecision<T>> {
        let error_now = measure_error(self.config.error_space, w, cb)?;
        if self.steps_since < self.config.t_min {
            self.steps_since += 1;
            return Ok(self.decision(false, 0.0, error_now, DecisionReason::IntervalNotReached));
        }
        let p_cur = index_distribution(w, cb)?;
        let kl = kl_divergence(&p_cur, &self.p_old)?;
        if kl <= self.config.t_kl {
            self.steps_since += 1;
            return Ok(self.decision(false, kl, error_now, DecisionReason::BelowThreshold));
        }
        if self.config.error_gate && error_now <= self.last_error {
            self.steps_since += 1;
            return Ok(self.decision(false, kl, error_now, DecisionReason::ErrorGateBlocked));
        }

        let stats = compute_stats(w)?;
        let normalized = normalize_values(w.values(), stats)?;
        let before = clustering_objective(&normalized, cb.centers());
        let fit = lloyd(&normalized, cb.centers(), self.config.max_iter, self.config.tol)?;
        let refit = Codebook::new(cb.bits(), fit.centers, stats)?;
        let after = clustering_objective(&normalized, refit.centers());

        self.p_old = index_distribution(w, &refit)?;
        self.last_error = measure_error(self.config.error_space, w, &refit)?;
        self.steps_since = 0;
        *cb = refit;
        let mut d = self.decision(true, kl, error_now, DecisionReason::Triggered);
        d.objective_before = Some(before);
        d.objective_after = Some(after);
        Ok(d)
    }

    fn decision(&self, recluster: bool, kl: f64, error_now: T, reason: DecisionReason) -> SchedulerDecision<T> {
        SchedulerDecision { recluster, kl, error_now, reason, objective_before: None, objective_after: None }
    }
}

fn measure_error<T: Scalar>(space: ErrorSpace, w: &WeightTensor<T>, cb: &Codebook<T>) -> Result<T> {
    let a = quantize(w, cb)?;
    match space {
        ErrorSpace::Raw => quant_error(w, &a),
        ErrorSpace::Normalized => quant_error_normalized(w, &a, cb.stats()),
    }
}

/// Fraction of elements assigned to each codebook entry.
pub fn index_distribution<T: Scalar>(w: &WeightTensor<T>, cb: &Codebook<T>) -> Result<Vec<f64>> {
    let levels = cb.bits().levels();
    let a = quantize(w, cb)?;
    let n = w.len() as f64;
    Ok(a.histogram(levels).into_iter().map(|c| c as f64 / n).collect())
}

/// `KL(p_cur || p_old)` in nats after adding [`KL_SMOOTHING`] to every entry
/// of both vectors and renormalizing. Rounding noise below zero is clamped.
pub fn kl_divergence(p_cur: &[f64], p_old: &[f64]) -> Result<f64> {
    if p_cur.len() != p_old.len() {
        return Err(Error::LengthMismatch { expected: p_old.len(), actual: p_cur.len() });
    }
    let smooth = |p: &[f64]| {
        let total: f64 = p.iter().map(|x| x + KL_SMOOTHING).sum();
        p.iter().map(|x| (x + KL_SMOOTHING) / total).collect::<Vec<_>>()
    };
    Ok(kl_divergence_raw(&smooth(p_cur), &smooth(p_old)).max(0.0))
}

/// Unsmoothed `sum p ln(p / q)`; zero entries of `p` contribute nothing.
pub fn kl_divergence_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{Bits, NormStats};

    fn t(v: &[f64]) -> WeightTensor<f64> {
        WeightTensor::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn index_distribution_examples() {
        let cb = Codebook::new(Bits::ONE, vec![-1.5, 1.5], NormStats { mu: 0.0, sigma: 1.0 }).unwrap();
        assert_eq!(index_distribution(&t(&[-2.0, -1.0, 1.0, 2.0]), &cb).unwrap(), vec![0.5, 0.5]);
        assert_eq!(index_distribution(&t(&[-3.0, -2.0, -1.0, -0.5]), &cb).unwrap(), vec![1.0, 0.0]);

        let centers = vec![-2.0, -1.0, 1.0, 2.0];
        let cb = Codebook::new(Bits::TWO, centers.clone(), NormStats { mu: 0.0, sigma: 1.0 }).unwrap();
        assert_eq!(index_distribution(&t(&centers), &cb).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn kl_examples() {
        assert!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-9);
        assert!((kl_divergence_raw(&[0.75, 0.25], &[0.5, 0.5]) - 0.130812).abs() < 1e-4);
        assert!((kl_divergence(&[0.75, 0.25], &[0.5, 0.5]).unwrap() - 0.130812).abs() < 1e-4);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-6);
        assert!(matches!(kl_divergence(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn kl_with_zero_reference_is_finite() {
        let kl = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(kl.is_finite() && kl > 1.0);
    }

    fn setup(t_min: u64) -> (CacState<f64>, Codebook<f64>, WeightTensor<f64>) {
        let w = t(&[-2.0, -1.0, 1.0, 2.0]);
        let cb = Codebook::fit(&w, Bits::ONE, &Default::default()).unwrap();
        let cfg = SchedulerConfig { t_min, ..SchedulerConfig::default() };
        (CacState::new(cfg, &w, &cb).unwrap(), cb, w)
    }

    #[test]
    fn interval_not_reached() {
        let (mut s, mut cb, _) = setup(50);
        let shifted = t(&[10.0, 11.0, 12.0, 13.0]);
        let d = s.step(&shifted, &mut cb).unwrap();
        assert_eq!(d.reason, DecisionReason::IntervalNotReached);
        assert!(!d.recluster);
        assert_eq!(s.steps_since(), 1);
    }

    #[test]
    fn unchanged_weights_stay_below_threshold() {
        let (mut s, mut cb, w) = setup(3);
        let before = cb.clone();
        for _ in 0..3 {
            s.step(&w, &mut cb).unwrap();
        }
        let d = s.step(&w, &mut cb).unwrap();
        assert_eq!(d.reason, DecisionReason::BelowThreshold);
        assert!(d.kl.abs() < 1e-9);
        assert_eq!(cb, before);
    }

    #[test]
    fn mass_crossing_boundary_triggers() {
        let (mut s, mut cb, _) = setup(1);
        assert_eq!(s.p_old(), &[0.5, 0.5]);
        let shifted = t(&[-4.0, -3.0, -1.0, -0.5]);
        s.step(&shifted, &mut cb).unwrap();
        let d = s.step(&shifted, &mut cb).unwrap();
        assert_eq!(d.reason, DecisionReason::Triggered);
        assert!((d.kl - 2f64.ln()).abs() < 1e-6);
        assert_eq!(s.steps_since(), 0);
        assert!(d.objective_after.unwrap() <= d.objective_before.unwrap());
        assert_eq!(cb.stats(), compute_stats(&shifted).unwrap());
    }

    #[test]
    fn error_gate_blocks_when_error_does_not_grow() {
        let w = t(&[-2.0, -1.0, 1.0, 2.0]);
        let cb0 = Codebook::fit(&w, Bits::ONE, &Default::default()).unwrap();
        let cfg = SchedulerConfig { t_min: 1, error_gate: true, ..SchedulerConfig::default() };
        let mut s = CacState::new(cfg, &w, &cb0).unwrap();
        let mut cb = cb0.clone();
        // all values land on the lower center exactly: error drops to zero, KL is large
        let lower = cb0.dequantized_centers()[0];
        let collapsed = t(&[lower; 4]);
        s.step(&collapsed, &mut cb).unwrap();
        let d = s.step(&collapsed, &mut cb).unwrap();
        assert_eq!(d.reason, DecisionReason::ErrorGateBlocked);
        assert!(d.kl > 0.5);
        assert_eq!(cb, cb0);
    }

    #[test]
    fn rejects_bad_config() {
        let w = t(&[-2.0, -1.0, 1.0, 2.0]);
        let cb = Codebook::fit(&w, Bits::ONE, &Default::default()).unwrap();
        let cfg = SchedulerConfig { t_min: 0, ..SchedulerConfig::default() };
        assert!(matches!(CacState::new(cfg, &w, &cb), Err(Error::BadConfig(_))));
    }
}
