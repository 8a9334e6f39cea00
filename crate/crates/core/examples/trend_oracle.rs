//! Runs every training mode on the default toy task over a set of seeds and
//! prints per-mode means. This is the run the acceptance thresholds are
//! frozen from.
//!
//! ```text
//! cargo run --release -p promptquant --example trend_oracle -- [key=value ...]
//! ```
//!
//! Keys: seeds, epochs, lr, tau, noise_small, noise_large, t_min, t_kl,
//! prompt_len, prompt_scale, class_bend, init_offset, noise_std, samples,
//! read_rank, read_scale, structured, verbose, seed0,
//! noise_sweep.

use std::collections::HashMap;
use std::time::Instant;

use promptquant::harness::{build_task, train, MethodConfig, Mode, ToyConfig, TrainReport};
use promptquant::Bits;

fn main() {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: f64| args.get(k).filter(|_| k != "noise_sweep").map(|v| v.parse::<f64>().expect("numeric value")).unwrap_or(d);

    let seeds = get("seeds", 5.0) as u64;
    let seed0 = get("seed0", 0.0) as u64;
    let verbose = get("verbose", 0.0) > 0.0;
    let defaults = ToyConfig::default();
    let toy = ToyConfig {
        prompt_len: get("prompt_len", defaults.prompt_len as f64) as usize,
        class_bend: get("class_bend", defaults.class_bend),
        init_offset: get("init_offset", defaults.init_offset),
        noise_std: get("noise_std", defaults.noise_std),
        samples_per_class: get("samples", defaults.samples_per_class as f64) as usize,
        class_read_rank: get("read_rank", defaults.class_read_rank as f64) as usize,
        class_read_scale: get("read_scale", defaults.class_read_scale),
        prompt_scale: get("prompt_scale", defaults.prompt_scale),
        structured_reference: get("structured", defaults.structured_reference as u8 as f64) > 0.0,
        ..defaults
    };
    let base = MethodConfig::<f64>::default();
    let mut method = MethodConfig {
        epochs: get("epochs", base.epochs as f64) as usize,
        lr: get("lr", base.lr),
        tau: get("tau", base.tau),
        ..base
    };
    method.scheduler.t_min = get("t_min", method.scheduler.t_min as f64) as u64;
    method.scheduler.t_kl = get("t_kl", method.scheduler.t_kl);

    let modes = [
        Mode::Baseline,
        Mode::Noise { std: get("noise_small", 0.01) },
        Mode::Noise { std: get("noise_large", 0.1) },
        Mode::Qat { bits: Bits::ONE },
        Mode::Qat { bits: Bits::TWO },
        Mode::Qat { bits: Bits::FOUR },
        Mode::Ptq { bits: Bits::ONE },
    ];
    if let Some(list) = args.get("noise_sweep") {
        // baseline plus the listed noise levels, nothing else
        for std in std::iter::once(0.0).chain(list.split(',').map(|v| v.parse::<f64>().expect("noise level"))) {
            let mode = if std == 0.0 { Mode::Baseline } else { Mode::Noise { std } };
            let new: f64 = (seed0..seed0 + seeds)
                .map(|seed| {
                    let task = build_task(&ToyConfig { seed, ..toy.clone() }).expect("task");
                    train(&task, &MethodConfig { mode, seed, ..method.clone() }).expect("train").last().new_acc
                })
                .sum::<f64>()
                / seeds as f64;
            println!("{:<16} new {:.4}", mode.name(), new);
        }
        return;
    }
    println!("toy: {toy:?}");
    println!(
        "method: epochs={} lr={} tau={} t_min={} t_kl={}",
        method.epochs, method.lr, method.tau, method.scheduler.t_min, method.scheduler.t_kl
    );
    println!("{:<16} {:>9} {:>9} {:>9} {:>9} {:>10} {:>9}", "mode", "base", "new", "peak_new", "h", "reclusters", "var_x");
    let start = Instant::now();
    let mut finals = Vec::new();
    for mode in modes {
        let reports: Vec<TrainReport<f64>> = (seed0..seed0 + seeds)
            .map(|seed| {
                let task = build_task(&ToyConfig { seed, ..toy.clone() }).expect("task");
                train(&task, &MethodConfig { mode, seed, ..method.clone() }).expect("train")
            })
            .collect();
        let mean = |f: &dyn Fn(&TrainReport<f64>) -> f64| reports.iter().map(f).sum::<f64>() / seeds as f64;
        let peak = |r: &TrainReport<f64>| r.epochs[1..].iter().map(|e| e.new_acc).fold(f64::MIN, f64::max);
        println!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10.1} {:>9.2}",
            mode.name(),
            mean(&|r| r.last().base_acc),
            mean(&|r| r.last().new_acc),
            mean(&peak),
            mean(&|r| r.last().h_mean),
            mean(&|r| r.recluster_steps.len() as f64),
            mean(&|r| r.last().prompt_variance / r.epochs[0].prompt_variance),
        );
        finals.push((mean(&|r| r.last().base_acc), mean(&|r| r.last().new_acc), mean(&peak)));
        if verbose {
            for r in &reports {
                let trace: Vec<String> =
                    r.epochs.iter().step_by(5).map(|e| format!("{:.2}/{:.2}", e.base_acc, e.new_acc)).collect();
                println!("    {}", trace.join(" "));
            }
        }
    }
    let [baseline, small, large, q1, q2, q4, p1] = finals[..] else { unreachable!() };
    let inversions = |v: [f64; 3], dir: f64| {
        let worst = v.windows(2).map(|w| dir * (w[0] - w[1])).fold(0.0f64, f64::max);
        let count = v.windows(2).filter(|w| dir * (w[0] - w[1]) > 0.0).count();
        (count, worst * 100.0)
    };
    println!(
        "margins(pt): peak-final={:.2} qat1-base={:.2} qat1-ptq1={:.2} noise-none={:.2} noise-large={:.2}",
        (baseline.2 - baseline.1) * 100.0,
        (q1.1 - baseline.1) * 100.0,
        (q1.1 - p1.1) * 100.0,
        (small.1 - baseline.1) * 100.0,
        (small.1 - large.1) * 100.0,
    );
    println!(
        "bit sweep: base inversions {:?}, new inversions {:?}",
        inversions([q1.0, q2.0, q4.0], 1.0),
        inversions([q1.1, q2.1, q4.1], -1.0)
    );
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
