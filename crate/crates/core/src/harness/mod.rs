//! Synthetic transfer-learning testbed: a frozen random encoder, a tunable
//! prompt, a cosine-similarity classifier and training loops for the
//! baseline, Gaussian-noise, QAT and PTQ modes.

mod task;
mod train;

pub use task::{build_task, Encoder, EncoderPass, Samples, ToyConfig, ToyTask};
pub use train::{evaluate, train, EpochRecord, MethodConfig, Mode, TrainReport};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use task::{dot, normalized};

/// Softmax over cosine similarities scaled by `1 / tau`.
pub fn predict<T: Scalar>(f_v: &[T], class_feats: &[Vec<T>], tau: T) -> Result<Vec<T>> {
    if !(tau > T::zero()) {
        return Err(Error::NonPositive("tau".into()));
    }
    let x = normalized(f_v)?;
    let logits = class_feats
        .iter()
        .map(|f| {
            if f.len() != x.len() {
                return Err(Error::LengthMismatch { expected: x.len(), actual: f.len() });
            }
            Ok(dot(&x, &normalized(f)?) / tau)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(softmax(&logits))
}

pub(crate) fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// `2 * base * new / (base + new)`.
pub fn harmonic_mean<T: Scalar>(base: T, new: T) -> Result<T> {
    if !(base > T::zero()) || !(new > T::zero()) {
        return Err(Error::NonPositive(format!("harmonic mean of {base} and {new}")));
    }
    Ok(T::of(2.0) * base * new / (base + new))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_orthogonal_classes() {
        let p = predict(&[1.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn predict_large_tau_is_uniform() {
        let feats = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.3, 0.3, 0.9]];
        let p: Vec<f64> = predict(&[0.2, -1.0, 0.5], &feats, 1e6).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn predict_scale_invariant() {
        let feats = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, -3.0]];
        let a: Vec<f64> = predict(&[0.3, 0.7], &feats, 0.1).unwrap();
        let b = predict(&[3.0, 7.0], &feats, 0.1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn predict_errors() {
        assert_eq!(predict(&[0.0, 0.0], &[vec![1.0, 0.0]], 1.0), Err(Error::ZeroNorm));
        assert_eq!(predict(&[1.0, 0.0], &[vec![0.0, 0.0]], 1.0), Err(Error::ZeroNorm));
        assert!(matches!(predict(&[1.0, 0.0], &[vec![1.0, 0.0]], 0.0), Err(Error::NonPositive(_))));
    }

    #[test]
    fn harmonic_mean_examples() {
        assert!((harmonic_mean(82.69f64, 63.22).unwrap() - 71.66).abs() < 0.01);
        assert!((harmonic_mean(80.68f64, 74.44).unwrap() - 77.43).abs() < 0.01);
        assert!((harmonic_mean(0.4f64, 0.4).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(harmonic_mean(0.0, 0.5), Err(Error::NonPositive(_))));
    }
}
