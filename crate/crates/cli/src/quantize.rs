//! `quantize` and `dequantize`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use promptquant::io::{format_record, read_weights, write_weights, WeightFormat};
use promptquant::packing::{deserialize, serialize, storage_bits};
use promptquant::{quant_error, quant_error_normalized, quantize as quantize_tensor, Assignment, Bits, Codebook, Init, KMeansConfig, WeightTensor};

use crate::{files, parse_bits, CmdResult, Ctx, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Optimal,
    Quantile,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long, value_parser = parse_bits)]
    pub bits: Bits,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "format", value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Destination QPRM blob.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = InitArg::Optimal)]
    pub init: InitArg,
    /// Uniform jitter added to the initial centers, drawn from `--seed`.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct DequantizeArgs {
    /// QPRM blob.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "format", value_enum, default_value_t = Format::Auto)]
    pub format: Format,
}

pub fn input_format(path: &Path, f: Format) -> WeightFormat {
    match f {
        Format::Auto => WeightFormat::detect(path),
        Format::F32le => WeightFormat::F32le,
        Format::Text => WeightFormat::Text,
    }
}

pub fn output_format(path: &Path, f: Format) -> WeightFormat {
    match f {
        Format::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some("f32" | "bin") => WeightFormat::F32le,
            _ => WeightFormat::Text,
        },
        Format::F32le => WeightFormat::F32le,
        Format::Text => WeightFormat::Text,
    }
}

/// Reads weights (always stored as f32) and widens them for fitting.
pub fn load_weights(path: &Path, f: Format) -> promptquant::Result<WeightTensor<f64>> {
    let w = read_weights(path, input_format(path, f))?;
    WeightTensor::new(w.values().iter().map(|&v| v as f64).collect(), w.shape().to_vec())
}

pub fn quantize(a: &QuantizeArgs, ctx: &Ctx) -> CmdResult {
    let w = load_weights(&a.input, a.format)?;
    let cfg = KMeansConfig {
        init: match a.init {
            InitArg::Optimal => Init::Optimal,
            InitArg::Quantile => Init::Quantile,
        },
        jitter: a.jitter,
        seed: ctx.seed,
        max_iter: a.max_iter,
        ..KMeansConfig::default()
    };
    let cb = Codebook::fit(&w, a.bits, &cfg)?;
    let assignment = quantize_tensor(&w, &cb)?;
    let blob = serialize(&cb, &assignment.indices)?;
    files::write(&a.out, &blob)?;

    // what a reader of the blob will reconstruct (half-precision centers)
    let (stored_cb, stored_idx): (Codebook<f64>, Vec<u32>) = deserialize(&blob)?;
    let stored = Assignment::from_indices(stored_idx, &stored_cb)?;
    ctx.diag(format!("fitted {} centers on {} values", a.bits.levels(), w.len()));
    print!(
        "{}",
        format_record(&[
            ("n", w.len().to_string()),
            ("bits", a.bits.to_string()),
            ("mu", cb.stats().mu.to_string()),
            ("sigma", cb.stats().sigma.to_string()),
            ("quant_error", quant_error(&w, &assignment)?.to_string()),
            ("quant_error_normalized", quant_error_normalized(&w, &assignment, cb.stats())?.to_string()),
            ("stored_quant_error", quant_error(&w, &stored)?.to_string()),
            ("storage_bits", storage_bits(w.len() as u64, a.bits).to_string()),
            ("blob_bytes", blob.len().to_string()),
        ])
    );
    Ok(())
}

pub fn dequantize(a: &DequantizeArgs, ctx: &Ctx) -> CmdResult {
    let (cb, indices): (Codebook<f64>, Vec<u32>) = deserialize(&files::read(&a.input)?)?;
    let n = indices.len();
    let rec = Assignment::from_indices(indices, &cb)?;
    let w = WeightTensor::from_vec(rec.reconstruction)?;
    let format = output_format(&a.out, a.format);
    write_weights(&a.out, &w, format)?;
    ctx.diag(format!("wrote {n} values as {format:?}"));
    Ok(())
}
