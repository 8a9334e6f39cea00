//! `analyze`: distribution diagnostics over a snapshot CSV.
//!
//! Input rows are `label,v0,v1,...` after a header line, as written by
//! `train-toy`. Writes `analysis.csv` (step, variance, kld, outlier_fraction)
//! and one `histogram_step<label>.csv` per snapshot, all histograms sharing
//! the range of the whole series.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use promptquant::analyzer::{analyze_series, histogram, EventSpace, SnapshotSeries, DEFAULT_KLD_BINS};
use promptquant::{Bits, Codebook, Error, KMeansConfig, WeightTensor};

use crate::{files, parse_bits, CmdResult, Ctx, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KldSpace {
    /// Uniform bins over the joint range of each adjacent pair.
    Bins,
    /// Index distribution under a codebook fitted to the first snapshot.
    Codebook,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KldSpace::Bins)]
    pub kld_space: KldSpace,
    /// Bins for the divergence event space.
    #[arg(long, default_value_t = DEFAULT_KLD_BINS)]
    pub kld_bins: usize,
    /// Codebook width when `--kld-space codebook`.
    #[arg(long, value_parser = parse_bits, default_value = "1")]
    pub bits: Bits,
    #[arg(long, default_value_t = 64)]
    pub hist_bins: usize,
    /// Outliers lie strictly beyond this many standard deviations.
    #[arg(long, default_value_t = 3.0)]
    pub outlier_k: f64,
}

fn parse_snapshots(text: &str) -> promptquant::Result<SnapshotSeries<f64>> {
    let mut labels = Vec::new();
    let mut snaps = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let bad = |what: &str| Error::Parse(format!("snapshot line {}: {what}", i + 1));
        let label = fields.next().and_then(|l| l.trim().parse::<u64>().ok()).ok_or_else(|| bad("bad step label"))?;
        let values = fields.map(|v| v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))).collect::<Result<Vec<_>, _>>()?;
        labels.push(label);
        snaps.push(WeightTensor::from_vec(values)?);
    }
    if snaps.is_empty() {
        return Err(Error::EmptyTensor);
    }
    SnapshotSeries::new(snaps, labels)
}

pub fn analyze(a: &AnalyzeArgs, ctx: &Ctx) -> CmdResult {
    if a.kld_bins == 0 || a.hist_bins == 0 {
        return Err(Failure::Usage("bin counts must be positive".into()));
    }
    if a.outlier_k.is_nan() || a.outlier_k < 0.0 {
        return Err(Failure::Usage("--outlier-k must be non-negative".into()));
    }
    let series = parse_snapshots(&files::read_text(&a.input)?)?;
    let space = match a.kld_space {
        KldSpace::Bins => EventSpace::Bins(a.kld_bins),
        KldSpace::Codebook => {
            let cfg = KMeansConfig { seed: ctx.seed, ..KMeansConfig::default() };
            EventSpace::Codebook(Codebook::fit(&series.snapshots()[0], a.bits, &cfg)?)
        }
    };
    let rows = analyze_series(&series, a.outlier_k, &space)?;
    files::create_dir(&a.out)?;

    let mut csv = String::from("step,variance,kld,outlier_fraction\n");
    for r in &rows {
        let kld = r.kld.map(|k| k.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{kld},{}", r.step, r.variance, r.outlier_fraction).expect("write to string");
    }
    files::write(&a.out.join("analysis.csv"), csv)?;

    let all = series.snapshots().iter().flat_map(|s| s.values().iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let range = (lo < hi).then_some((lo, hi));
    let width = if lo < hi { (hi - lo) / a.hist_bins as f64 } else { 0.0 };
    for (snap, label) in series.snapshots().iter().zip(series.labels()) {
        let counts = histogram(snap.values(), a.hist_bins, range)?;
        let mut h = String::from("bin,lo,hi,count\n");
        for (i, c) in counts.iter().enumerate() {
            let edge = |k: usize| if k == a.hist_bins { hi } else { lo + width * k as f64 };
            writeln!(h, "{i},{},{},{c}", edge(i), edge(i + 1)).expect("write to string");
        }
        files::write(&a.out.join(format!("histogram_step{label}.csv")), h)?;
    }
    ctx.diag(format!("analyzed {} snapshots", rows.len()));
    Ok(())
}
