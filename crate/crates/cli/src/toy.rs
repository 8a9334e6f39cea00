//! `train-toy`: runs the synthetic harness over consecutive seeds.
//!
//! Seeds `--seed .. --seed + --seeds` are used for both the task and the
//! method. Outputs in `--out`:
//!
//! * `epochs.csv` — one row per (seed, epoch)
//! * `reclusters.csv` — global step of every re-cluster (QAT only)
//! * `snapshots_seed<S>.csv` — latent prompt per epoch, input for `analyze`
//! * `summary.txt` — final-epoch means over seeds, also printed to stdout

use std::fmt::Write as _;
use std::path::PathBuf;
use std::thread;

use clap::{Args, ValueEnum};
use promptquant::harness::{build_task, train, MethodConfig, Mode, ToyConfig, TrainReport};
use promptquant::io::format_record;
use promptquant::Bits;

use crate::{files, parse_bits, CmdResult, Ctx, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Noise,
    Qat,
    Ptq,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Bit width for `qat` and `ptq`.
    #[arg(long, value_parser = parse_bits)]
    pub bits: Option<Bits>,
    /// Noise standard deviation for `noise`.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Number of consecutive seeds, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum steps between re-clusters.
    #[arg(long)]
    pub cac_interval: Option<u64>,
    /// KL threshold (nats) for a re-cluster.
    #[arg(long)]
    pub cac_threshold: Option<f64>,
    /// Also require the quantization error to have grown.
    #[arg(long)]
    pub cac_error_gate: bool,
    /// Seeds trained in parallel; results are merged in seed order.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn method_config(a: &TrainToyArgs) -> Result<MethodConfig<f64>, Failure> {
    let usage = |m: &str| Failure::Usage(m.to_string());
    let mode = match a.mode {
        ModeArg::Baseline => Mode::Baseline,
        ModeArg::Noise => Mode::Noise { std: a.noise_std.ok_or_else(|| usage("--mode noise requires --noise-std"))? },
        ModeArg::Qat => Mode::Qat { bits: a.bits.ok_or_else(|| usage("--mode qat requires --bits"))? },
        ModeArg::Ptq => Mode::Ptq { bits: a.bits.ok_or_else(|| usage("--mode ptq requires --bits"))? },
    };
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if a.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let mut m = MethodConfig::with_mode(mode);
    if let Some(e) = a.epochs {
        m.epochs = e;
    }
    if let Some(lr) = a.lr {
        m.lr = lr;
    }
    if let Some(tau) = a.tau {
        m.tau = tau;
    }
    if let Some(t) = a.cac_interval {
        m.scheduler.t_min = t;
    }
    if let Some(t) = a.cac_threshold {
        m.scheduler.t_kl = t;
    }
    m.scheduler.error_gate = a.cac_error_gate;
    m.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(m)
}

fn run_seed(seed: u64, method: &MethodConfig<f64>) -> promptquant::Result<TrainReport<f64>> {
    let task = build_task(&ToyConfig { seed, ..ToyConfig::default() })?;
    train(&task, &MethodConfig { seed, ..method.clone() })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn train_toy(a: &TrainToyArgs, ctx: &Ctx) -> CmdResult {
    let method = method_config(a)?;
    let seeds: Vec<u64> = (ctx.seed..ctx.seed + a.seeds).collect();
    files::create_dir(&a.out)?;

    let mut reports = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(a.jobs) {
        let results: Vec<_> = thread::scope(|s| {
            let method = &method;
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_seed(seed, method))).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        for (seed, r) in chunk.iter().zip(results) {
            let r = r?;
            ctx.diag(format!("seed {seed}: base {:.4} new {:.4}", r.last().base_acc, r.last().new_acc));
            reports.push((*seed, r));
        }
    }

    let mut epochs = String::from("seed,epoch,base_acc,new_acc,h_mean,quant_error,index_kld,prompt_variance,distinct_values\n");
    let mut reclusters = String::from("seed,step\n");
    for (seed, r) in &reports {
        for e in &r.epochs {
            writeln!(
                epochs,
                "{seed},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.base_acc,
                e.new_acc,
                e.h_mean,
                opt(e.quant_error),
                opt(e.index_kld),
                e.prompt_variance,
                e.distinct_values
            )
            .expect("write to string");
        }
        for step in &r.recluster_steps {
            writeln!(reclusters, "{seed},{step}").expect("write to string");
        }
        let mut snap = String::from("epoch,values\n");
        for (i, s) in r.snapshots.iter().enumerate() {
            let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            writeln!(snap, "{i},{}", row.join(",")).expect("write to string");
        }
        files::write(&a.out.join(format!("snapshots_seed{seed}.csv")), snap)?;
    }
    files::write(&a.out.join("epochs.csv"), epochs)?;
    files::write(&a.out.join("reclusters.csv"), reclusters)?;

    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&TrainReport<f64>) -> f64| reports.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let summary = format_record(&[
        ("mode", method.mode.name()),
        ("seeds", a.seeds.to_string()),
        ("first_seed", ctx.seed.to_string()),
        ("epochs", method.epochs.to_string()),
        ("base_acc", format!("{:.6}", mean(&|r| r.last().base_acc))),
        ("new_acc", format!("{:.6}", mean(&|r| r.last().new_acc))),
        ("h_mean", format!("{:.6}", mean(&|r| r.last().h_mean))),
        ("peak_new_acc", format!("{:.6}", mean(&|r| r.epochs[1..].iter().map(|e| e.new_acc).fold(0.0, f64::max)))),
        ("reclusters", format!("{:.2}", mean(&|r| r.recluster_steps.len() as f64))),
    ]);
    files::write(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
