use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::task::{dot, normalized, permutation, Samples, ToyTask};
use super::{argmax, harmonic_mean, softmax};
use crate::error::{Error, Result};
use crate::quantizer::{quantize, quant_error, Bits, Codebook, KMeansConfig};
use crate::scalar::Scalar;
use crate::scheduler::{index_distribution, kl_divergence, CacState, SchedulerConfig};
use crate::ste::{ste_backward, ste_forward, GaussianNoise, LatentWeights, NoiseConfig};
use crate::tensor::WeightTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Baseline,
    /// Gaussian noise on the prompt seen by the forward pass.
    Noise { std: f64 },
    /// Quantization-aware training with scheduled re-clustering.
    Qat { bits: Bits },
    /// Full-precision training, quantized afterwards.
    Ptq { bits: Bits },
}

impl Mode {
    pub fn name(&self) -> String {
        match self {
            Mode::Baseline => "baseline".into(),
            Mode::Noise { std } => format!("noise({std})"),
            Mode::Qat { bits } => format!("qat(b={bits})"),
            Mode::Ptq { bits } => format!("ptq(b={bits})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig<T> {
    pub mode: Mode,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Softmax temperature.
    pub tau: f64,
    /// Epochs of linear learning-rate warm-up.
    pub warmup_epochs: usize,
    /// Fresh noise every step (`true`) or once on the initial prompt.
    pub noise_per_step: bool,
    pub scheduler: SchedulerConfig<T>,
    pub kmeans: KMeansConfig<T>,
}

impl<T: Scalar> Default for MethodConfig<T> {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            epochs: 50,
            lr: 3e-3,
            batch: 32,
            seed: 0,
            tau: 0.1,
            warmup_epochs: 1,
            noise_per_step: true,
            scheduler: SchedulerConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

impl<T: Scalar> MethodConfig<T> {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::BadConfig("lr must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::BadConfig("tau must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::BadConfig("batch must be positive".into()));
        }
        if let Mode::Noise { std } = self.mode {
            NoiseConfig::new(std, 0)?;
        }
        self.scheduler.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord<T> {
    /// 0 is the untrained prompt.
    pub epoch: usize,
    pub base_acc: f64,
    pub new_acc: f64,
    /// Zero when either accuracy is zero.
    pub h_mean: f64,
    /// Raw-space error of the evaluated prompt against its latent weights (quantized modes).
    pub quant_error: Option<T>,
    /// KL between the current index distribution and the scheduler's cached one (QAT).
    pub index_kld: Option<f64>,
    /// Population variance of the latent prompt.
    pub prompt_variance: T,
    /// Distinct values in the evaluated prompt.
    pub distinct_values: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub mode: Mode,
    pub epochs: Vec<EpochRecord<T>>,
    /// Global step indices at which the codebook was re-fitted.
    pub recluster_steps: Vec<u64>,
    pub final_codebook: Option<Codebook<T>>,
    /// Prompt used for evaluation after the last epoch.
    pub final_prompt: Vec<T>,
    /// Latent prompt at the end of every epoch, starting with the initial one.
    pub snapshots: Vec<Vec<T>>,
}

impl<T: Scalar> TrainReport<T> {
    pub fn last(&self) -> &EpochRecord<T> {
        self.epochs.last().expect("report has at least the initial record")
    }
}

/// Fraction of samples whose nearest class feature (by cosine) is their own label.
pub fn evaluate<T: Scalar>(task: &ToyTask<T>, prompt: &[T], samples: &Samples<T>, classes: &[usize]) -> Result<f64> {
    let pass = task.encoder.forward(prompt, classes);
    let feats = pass.features.iter().map(|f| normalized(f)).collect::<Result<Vec<_>>>()?;
    let mut correct = 0usize;
    for i in 0..samples.len() {
        let x = samples.row(i);
        let scores: Vec<T> = feats.iter().map(|f| dot(x, f)).collect();
        if classes[argmax(&scores)] == samples.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Mean cross-entropy gradient with respect to the prompt over a batch of base samples.
fn prompt_gradient<T: Scalar>(task: &ToyTask<T>, prompt: &[T], batch: &[usize], tau: T) -> Result<Vec<T>> {
    let classes = task.base_classes();
    let pass = task.encoder.forward(prompt, &classes);
    let norms: Vec<T> = pass.features.iter().map(|f| dot(f, f).sqrt()).collect();
    if norms.iter().any(|n| !(*n > T::zero())) {
        return Err(Error::ZeroNorm);
    }
    let unit: Vec<Vec<T>> = pass.features.iter().zip(&norms).map(|(f, &n)| f.iter().map(|&v| v / n).collect()).collect();
    let dim = task.train.dim;
    let mut grad_feats = vec![vec![T::zero(); dim]; classes.len()];
    let scale = T::one() / (tau * T::of_usize(batch.len()));
    for &i in batch {
        let x = task.train.row(i);
        let sims: Vec<T> = unit.iter().map(|u| dot(x, u)).collect();
        let logits: Vec<T> = sims.iter().map(|&s| s / tau).collect();
        let probs = softmax(&logits);
        let label = task.train.labels[i];
        for (c, ((gf, u), (&p, &s))) in grad_feats.iter_mut().zip(&unit).zip(probs.iter().zip(&sims)).enumerate() {
            let g = (p - if classes[c] == label { T::one() } else { T::zero() }) * scale;
            if g == T::zero() {
                continue;
            }
            // d cos(x, f) / d f = (x - cos * f_hat) / |f|
            let k = g / norms[c];
            for ((acc, &xv), &uv) in gf.iter_mut().zip(x).zip(u) {
                *acc += k * (xv - s * uv);
            }
        }
    }
    Ok(task.encoder.backward(&pass, &grad_feats))
}

fn count_distinct<T: Scalar>(values: &[T]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup();
    v.len()
}

fn variance<T: Scalar>(values: &[T]) -> T {
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}

/// Trains the prompt of `task` with method `m` and records per-epoch metrics.
pub fn train<T: Scalar>(task: &ToyTask<T>, m: &MethodConfig<T>) -> Result<TrainReport<T>> {
    m.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let tau = T::of(m.tau);
    let n = task.train.len();
    let steps_per_epoch = n.div_ceil(m.batch);
    let warmup_steps = (m.warmup_epochs * steps_per_epoch) as f64;
    let shape = vec![task.initial_prompt.len()];

    let mut noise = match m.mode {
        Mode::Noise { std } => Some(GaussianNoise::new(&NoiseConfig {
            std,
            seed: m.seed ^ 0x9E37_79B9_7F4A_7C15,
            per_step: m.noise_per_step,
        })),
        _ => None,
    };
    let mut latent = WeightTensor::new(task.initial_prompt.clone(), shape.clone())?;
    if let (Some(gen), false) = (noise.as_mut(), m.noise_per_step) {
        latent = latent.with_values(gen.perturb(latent.values()))?;
    }

    let mut qat = match m.mode {
        Mode::Qat { bits } => {
            let cb = Codebook::fit(&latent, bits, &m.kmeans)?;
            let state = CacState::new(m.scheduler.clone(), &latent, &cb)?;
            Some((cb, state))
        }
        _ => None,
    };

    let mut report = TrainReport {
        mode: m.mode,
        epochs: Vec::with_capacity(m.epochs + 1),
        recluster_steps: Vec::new(),
        final_codebook: None,
        final_prompt: Vec::new(),
        snapshots: Vec::with_capacity(m.epochs + 1),
    };
    record_epoch(task, m, 0, &latent, qat.as_ref(), &mut report)?;

    let mut step: u64 = 0;
    for epoch in 1..=m.epochs {
        let order = permutation(&mut rng, n);
        for batch in order.chunks(m.batch) {
            let warm = if warmup_steps > 0.0 { ((step + 1) as f64 / warmup_steps).min(1.0) } else { 1.0 };
            let lr = T::of(m.lr * warm);
            let grad = match (&mut qat, &mut noise) {
                (Some((cb, state)), _) => {
                    if state.step(&latent, cb)?.recluster {
                        report.recluster_steps.push(step);
                    }
                    let lw = LatentWeights::new(latent.clone(), cb)?;
                    let forward = ste_forward(&lw, cb)?;
                    let g = prompt_gradient(task, forward.values(), batch, tau)?;
                    ste_backward(&g, latent.len())?
                }
                (None, Some(gen)) if m.noise_per_step => {
                    let noisy = gen.perturb(latent.values());
                    prompt_gradient(task, &noisy, batch, tau)?
                }
                _ => prompt_gradient(task, latent.values(), batch, tau)?,
            };
            let next = latent.values().iter().zip(&grad).map(|(&w, &g)| w - lr * g).collect();
            latent = latent.with_values(next)?;
            step += 1;
        }
        record_epoch(task, m, epoch, &latent, qat.as_ref(), &mut report)?;
    }
    if let Some((cb, _)) = qat {
        report.final_codebook = Some(cb);
    }
    Ok(report)
}

fn record_epoch<T: Scalar>(
    task: &ToyTask<T>,
    m: &MethodConfig<T>,
    epoch: usize,
    latent: &WeightTensor<T>,
    qat: Option<&(Codebook<T>, CacState<T>)>,
    report: &mut TrainReport<T>,
) -> Result<()> {
    let (prompt, quant_err, index_kld, codebook) = match (m.mode, qat) {
        (Mode::Qat { .. }, Some((cb, state))) => {
            let a = quantize(latent, cb)?;
            let err = quant_error(latent, &a)?;
            let kl = kl_divergence(&index_distribution(latent, cb)?, state.p_old())?;
            (a.reconstruction, Some(err), Some(kl), Some(cb.clone()))
        }
        (Mode::Ptq { bits }, _) => {
            let cb = Codebook::fit(latent, bits, &m.kmeans)?;
            let a = quantize(latent, &cb)?;
            let err = quant_error(latent, &a)?;
            (a.reconstruction, Some(err), None, Some(cb))
        }
        _ => (latent.values().to_vec(), None, None, None),
    };
    let base_acc = evaluate(task, &prompt, &task.test_base, &task.base_classes())?;
    let new_acc = evaluate(task, &prompt, &task.test_new, &task.new_classes())?;
    report.epochs.push(EpochRecord {
        epoch,
        base_acc,
        new_acc,
        h_mean: harmonic_mean(base_acc, new_acc).unwrap_or(0.0),
        quant_error: quant_err,
        index_kld,
        prompt_variance: variance(latent.values()),
        distinct_values: count_distinct(&prompt),
    });
    report.snapshots.push(latent.values().to_vec());
    report.final_prompt = prompt;
    if matches!(m.mode, Mode::Ptq { .. }) {
        report.final_codebook = codebook;
    }
    Ok(())
}
