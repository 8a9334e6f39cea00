//! Synthetic prompt-tuning task.
//!
//! A frozen random text-side encoder maps `[prompt; class embedding]` to a
//! class feature:
//!
//! ```text
//! hidden_c = tanh((A + eta * U_c V_c^T) * prompt + B * e_c)
//! f_c      = C * hidden_c
//! ```
//!
//! The prompt is shared by every class, the way a learned context is shared
//! across class names; the low-rank term lets each class read it slightly
//! differently, so a prompt tuned to the quirks of the base classes'
//! readouts does not carry over to new ones.
//!
//! Class directions `u_c` are the features produced by a hidden reference
//! prompt, bent by a class-specific random perturbation, and images of class
//! `c` are `u_c` plus isotropic Gaussian noise. By default the reference lies
//! in the row space of `A`, so its information is concentrated in a few
//! directions and most of the prompt's coordinates carry little signal.
//! Training starts from a perturbed copy of the reference, sees base classes
//! only and is scored on held-out samples of base and new classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    /// Feature dimension `d`.
    pub feature_dim: usize,
    /// Number of prompt parameters.
    pub prompt_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_base: usize,
    pub n_new: usize,
    /// Training samples per base class.
    pub samples_per_class: usize,
    /// Held-out samples per class, base and new.
    pub test_per_class: usize,
    /// Image noise relative to the unit class direction.
    pub noise_std: f64,
    /// Scale of the class-specific bend applied to the reference features.
    pub class_bend: f64,
    /// Entry scale of the reference prompt.
    pub prompt_scale: f64,
    /// Offset of the initial prompt from the reference, relative to `prompt_scale`.
    pub init_offset: f64,
    /// Pairwise `|cos|` ceiling between class directions.
    pub max_class_cos: f64,
    /// Rank of each class's private prompt readout.
    pub class_read_rank: usize,
    /// Strength `eta` of the private readout relative to the shared one.
    pub class_read_scale: f64,
    /// Draw the reference prompt from the row space of `A` instead of isotropically.
    pub structured_reference: bool,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            prompt_len: 2048,
            embed_dim: 32,
            hidden_dim: 64,
            n_base: 16,
            n_new: 16,
            samples_per_class: 8,
            test_per_class: 100,
            noise_std: 1.0,
            class_bend: 1.0,
            prompt_scale: 0.02,
            init_offset: 0.5,
            max_class_cos: 0.9,
            class_read_rank: 8,
            class_read_scale: 0.5,
            structured_reference: true,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.feature_dim < 8 {
            return bad("feature_dim must be at least 8");
        }
        if self.n_base < 2 || self.n_new < 2 {
            return bad("need at least two base and two new classes");
        }
        if self.prompt_len == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("encoder dimensions must be positive");
        }
        if self.samples_per_class == 0 || self.test_per_class == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.prompt_scale > 0.0) || !(self.noise_std >= 0.0) || !(self.class_bend >= 0.0) || !(self.init_offset >= 0.0) {
            return bad("scales must be non-negative (prompt_scale positive)");
        }
        if !(self.class_read_scale >= 0.0) || (self.class_read_scale > 0.0 && self.class_read_rank == 0) {
            return bad("class readout needs a non-negative scale and a positive rank");
        }
        if !(self.max_class_cos > 0.0 && self.max_class_cos < 1.0) {
            return bad("max_class_cos must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Labelled, unit-normalized feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T> {
    pub features: Vec<T>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl<T: Scalar> Samples<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Frozen encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    /// hidden x prompt
    pub prompt_mix: Vec<T>,
    /// One `B * e_c` vector per class.
    pub class_bias: Vec<Vec<T>>,
    /// Per-class low-rank readout `(eta * U_c, V_c)`, row-major `hidden x rank` and
    /// `rank x prompt`; empty when disabled.
    pub class_read: Vec<(Vec<T>, Vec<T>)>,
    pub read_rank: usize,
    /// feature x hidden
    pub projection: Vec<T>,
    pub prompt_len: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
}

/// Intermediate values of one encoder pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderPass<T> {
    pub classes: Vec<usize>,
    pub hidden: Vec<Vec<T>>,
    pub features: Vec<Vec<T>>,
}

impl<T: Scalar> Encoder<T> {
    /// Class features for the requested classes.
    pub fn forward(&self, prompt: &[T], classes: &[usize]) -> EncoderPass<T> {
        let shared = matvec(&self.prompt_mix, prompt, self.hidden_dim);
        let mut hidden = Vec::with_capacity(classes.len());
        let mut features = Vec::with_capacity(classes.len());
        for &c in classes {
            let mut pre: Vec<T> = shared.iter().zip(&self.class_bias[c]).map(|(&s, &b)| s + b).collect();
            if let Some((u, v)) = self.class_read.get(c) {
                let coeffs = matvec(v, prompt, self.read_rank);
                for (acc, r) in pre.iter_mut().zip(matvec(u, &coeffs, self.hidden_dim)) {
                    *acc += r;
                }
            }
            let h: Vec<T> = pre.into_iter().map(T::tanh).collect();
            features.push(matvec(&self.projection, &h, self.feature_dim));
            hidden.push(h);
        }
        EncoderPass { classes: classes.to_vec(), hidden, features }
    }

    /// Gradient with respect to the prompt given gradients with respect to each class feature.
    pub fn backward(&self, pass: &EncoderPass<T>, grad_features: &[Vec<T>]) -> Vec<T> {
        let mut grad_pre = vec![T::zero(); self.hidden_dim];
        let mut private = vec![T::zero(); self.prompt_len];
        for ((h, gf), &c) in pass.hidden.iter().zip(grad_features).zip(&pass.classes) {
            let gh = matvec_t(&self.projection, gf, self.hidden_dim);
            let g_pre: Vec<T> = gh.iter().zip(h).map(|(&g, &hv)| g * (T::one() - hv * hv)).collect();
            if let Some((u, v)) = self.class_read.get(c) {
                let coeffs = matvec_t(u, &g_pre, self.read_rank);
                for (acc, r) in private.iter_mut().zip(matvec_t(v, &coeffs, self.prompt_len)) {
                    *acc += r;
                }
            }
            for (acc, g) in grad_pre.iter_mut().zip(g_pre) {
                *acc += g;
            }
        }
        let mut grad = matvec_t(&self.prompt_mix, &grad_pre, self.prompt_len);
        for (g, r) in grad.iter_mut().zip(private) {
            *g += r;
        }
        grad
    }
}

// rows = out.len(); m is rows x cols row-major
fn matvec<T: Scalar>(m: &[T], v: &[T], rows: usize) -> Vec<T> {
    let cols = v.len();
    (0..rows).map(|r| m[r * cols..(r + 1) * cols].iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
}

// transpose product: m is rows x cols, v has `rows` entries
fn matvec_t<T: Scalar>(m: &[T], v: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for (r, &vr) in v.iter().enumerate() {
        if vr == T::zero() {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *o += a * vr;
        }
    }
    out
}

pub(crate) fn normalized<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask<T> {
    pub config: ToyConfig,
    pub encoder: Encoder<T>,
    /// Unit directions, base classes first.
    pub class_dirs: Vec<Vec<T>>,
    pub reference_prompt: Vec<T>,
    pub initial_prompt: Vec<T>,
    pub train: Samples<T>,
    pub test_base: Samples<T>,
    pub test_new: Samples<T>,
}

impl<T: Scalar> ToyTask<T> {
    pub fn base_classes(&self) -> Vec<usize> {
        (0..self.config.n_base).collect()
    }

    pub fn new_classes(&self) -> Vec<usize> {
        (self.config.n_base..self.config.n_base + self.config.n_new).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn cast<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::of).collect()
}

/// Builds a task deterministically from `cfg.seed`.
pub fn build_task<T: Scalar>(cfg: &ToyConfig) -> Result<ToyTask<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (p, h, e, d) = (cfg.prompt_len, cfg.hidden_dim, cfg.embed_dim, cfg.feature_dim);
    let n_classes = cfg.n_base + cfg.n_new;

    // A * reference prompt has unit-variance entries
    let prompt_mix = gaussian(&mut rng, h * p, 1.0 / (cfg.prompt_scale * (p as f64).sqrt()));
    let mix_b = gaussian(&mut rng, h * e, 1.0 / (e as f64).sqrt());
    let projection = gaussian(&mut rng, d * h, 1.0 / (h as f64).sqrt());
    let reference = if cfg.structured_reference {
        let y = gaussian(&mut rng, h, 1.0);
        let r = matvec_t(&prompt_mix, &y, p);
        // scaled so that A * reference has unit rms, like the isotropic draw
        let ar = matvec(&prompt_mix, &r, h);
        let rms = (ar.iter().map(|v| v * v).sum::<f64>() / h as f64).sqrt();
        r.into_iter().map(|v| v / rms).collect()
    } else {
        gaussian(&mut rng, p, cfg.prompt_scale)
    };

    let mut encoder = Encoder {
        prompt_mix: cast(prompt_mix),
        class_bias: Vec::with_capacity(n_classes),
        class_read: Vec::new(),
        read_rank: cfg.class_read_rank,
        projection: cast(projection),
        prompt_len: p,
        hidden_dim: h,
        feature_dim: d,
    };
    let reference_t: Vec<T> = cast(reference.clone());
    let mut class_dirs: Vec<Vec<T>> = Vec::with_capacity(n_classes);
    let mut attempts = 0;
    while class_dirs.len() < n_classes {
        attempts += 1;
        if attempts > 1000 * n_classes {
            return Err(Error::BadConfig("could not draw well-separated class directions".into()));
        }
        let emb = gaussian(&mut rng, e, 1.0);
        let bias: Vec<T> = cast(matvec(&mix_b, &emb, h));
        let bend = gaussian(&mut rng, d, 1.0);
        encoder.class_bias.push(bias);
        if cfg.class_read_scale > 0.0 {
            let r = cfg.class_read_rank;
            // same entry scale as the shared readout, so eta is a relative strength
            let u = gaussian(&mut rng, h * r, cfg.class_read_scale / (r as f64).sqrt());
            let v = gaussian(&mut rng, r * p, 1.0 / (cfg.prompt_scale * (p as f64).sqrt()));
            encoder.class_read.push((cast(u), cast(v)));
        }
        let c = encoder.class_bias.len() - 1;
        let feat = encoder.forward(&reference_t, &[c]).features.remove(0);
        let feat = normalized(&feat)?;
        let bend = normalized(&cast::<T>(bend))?;
        let bent: Vec<T> = feat.iter().zip(&bend).map(|(&f, &b)| f + T::of(cfg.class_bend) * b).collect();
        let dir = normalized(&bent)?;
        let limit = T::of(cfg.max_class_cos);
        if class_dirs.iter().any(|u| dot(u, &dir).abs() >= limit) {
            encoder.class_bias.pop();
            encoder.class_read.truncate(encoder.class_bias.len());
            continue;
        }
        class_dirs.push(dir);
    }

    let initial: Vec<f64> = gaussian(&mut rng, p, cfg.init_offset * cfg.prompt_scale)
        .into_iter()
        .zip(&reference)
        .map(|(o, r)| r + o)
        .collect();

    let base: Vec<usize> = (0..cfg.n_base).collect();
    let new: Vec<usize> = (cfg.n_base..n_classes).collect();
    let train = draw_samples(&mut rng, &class_dirs, &base, cfg.samples_per_class, cfg.noise_std)?;
    let test_base = draw_samples(&mut rng, &class_dirs, &base, cfg.test_per_class, cfg.noise_std)?;
    let test_new = draw_samples(&mut rng, &class_dirs, &new, cfg.test_per_class, cfg.noise_std)?;

    Ok(ToyTask {
        config: cfg.clone(),
        encoder,
        class_dirs,
        reference_prompt: reference_t,
        initial_prompt: cast(initial),
        train,
        test_base,
        test_new,
    })
}

fn draw_samples<T: Scalar>(
    rng: &mut ChaCha8Rng,
    dirs: &[Vec<T>],
    classes: &[usize],
    per_class: usize,
    noise_std: f64,
) -> Result<Samples<T>> {
    let dim = dirs[0].len();
    let scale = noise_std / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(classes.len() * per_class * dim);
    let mut labels = Vec::with_capacity(classes.len() * per_class);
    for &c in classes {
        for _ in 0..per_class {
            let noise = gaussian(rng, dim, scale);
            let x: Vec<T> = dirs[c].iter().zip(noise).map(|(&u, z)| u + T::of(z)).collect();
            features.extend(normalized(&x)?);
            labels.push(c);
        }
    }
    Ok(Samples { features, labels, dim })
}

/// Shuffled sample order for one epoch.
pub(crate) fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            prompt_len: 64,
            samples_per_class: 4,
            test_per_class: 4,
            class_read_scale: 0.5,
            ..ToyConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a: ToyTask<f64> = build_task(&small()).unwrap();
        let b: ToyTask<f64> = build_task(&small()).unwrap();
        assert_eq!(a, b);
        let c: ToyTask<f64> = build_task(&ToyConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.class_dirs, c.class_dirs);
    }

    #[test]
    fn directions_are_unit_and_separated() {
        let t: ToyTask<f64> = build_task(&small()).unwrap();
        assert_eq!(t.class_dirs.len(), 32);
        for (i, u) in t.class_dirs.iter().enumerate() {
            assert!((dot(u, u) - 1.0).abs() < 1e-12);
            for v in &t.class_dirs[..i] {
                assert!(dot(u, v).abs() < 0.9);
            }
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let t: ToyTask<f64> = build_task(&small()).unwrap();
        let base = t.base_classes();
        assert!(t.train.labels.iter().all(|l| base.contains(l)));
        assert!(t.test_base.labels.iter().all(|l| base.contains(l)));
        assert!(t.test_new.labels.iter().all(|l| !base.contains(l)));
        assert!(t.new_classes().iter().all(|c| !base.contains(c)));
    }

    #[test]
    fn rejects_bad_config() {
        let r = build_task::<f64>(&ToyConfig { feature_dim: 4, ..small() });
        assert!(matches!(r, Err(Error::BadConfig(_))));
        let r = build_task::<f64>(&ToyConfig { n_new: 1, ..small() });
        assert!(matches!(r, Err(Error::BadConfig(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let t: ToyTask<f64> = build_task(&small()).unwrap();
        let classes = [0usize, 3, 5];
        // scalar objective: sum_c <w_c, f_c>
        let weights: Vec<Vec<f64>> = classes.iter().map(|&c| t.class_dirs[c].clone()).collect();
        let objective = |prompt: &[f64]| -> f64 {
            let pass = t.encoder.forward(prompt, &classes);
            pass.features.iter().zip(&weights).map(|(f, w)| dot(f, w)).sum()
        };
        let pass = t.encoder.forward(&t.initial_prompt, &classes);
        let grad = t.encoder.backward(&pass, &weights);
        let h = 1e-7;
        for i in [0usize, 7, 31, 63] {
            let mut plus = t.initial_prompt.clone();
            let mut minus = t.initial_prompt.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-4 * (1.0 + fd.abs()), "i={i} fd={fd} g={}", grad[i]);
        }
    }
}
