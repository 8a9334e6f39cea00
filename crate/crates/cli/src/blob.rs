//! `pack`, `unpack` and `inspect` on QPRM blobs.
//!
//! Index lists are text, one integer per line. Codebook records are
//! `key=value` lines with at least `bits`, `mu`, `sigma` and comma-separated
//! normalized `centers` (the format `unpack` writes).

use std::path::PathBuf;

use clap::Args;
use promptquant::io::{codebook_record, format_record, parse_record};
use promptquant::packing::{deserialize, fp16_baseline_bits, read_header, serialize, storage_bits, HEADER_LEN};
use promptquant::{Assignment, Bits, Codebook, Error, NormStats};

use crate::{files, CmdResult, Ctx};

#[derive(Debug, Args)]
pub struct PackArgs {
    /// Text file of indices, one per line.
    #[arg(long)]
    pub indices: PathBuf,
    /// Codebook record (`bits`, `mu`, `sigma`, `centers`).
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UnpackArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Where to write the index list.
    #[arg(long)]
    pub indices: PathBuf,
    /// Where to write the codebook record.
    #[arg(long)]
    pub codebook: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

fn parse_indices(text: &str) -> promptquant::Result<Vec<u32>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| l.parse::<u32>().map_err(|e| Error::Parse(format!("index line {}: {e}", i + 1))))
        .collect()
}

fn parse_codebook(text: &str) -> promptquant::Result<Codebook<f64>> {
    let rec = parse_record(text)?;
    let get = |k: &str| {
        rec.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str()).ok_or_else(|| Error::Parse(format!("codebook record lacks {k}")))
    };
    let num = |k: &str, v: &str| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")));
    let bits = Bits::new(get("bits")?.parse::<u32>().map_err(|e| Error::Parse(format!("bits: {e}")))?)?;
    let centers = get("centers")?.split(',').map(|c| num("centers", c)).collect::<promptquant::Result<Vec<_>>>()?;
    let stats = NormStats { mu: num("mu", get("mu")?)?, sigma: num("sigma", get("sigma")?)? };
    Codebook::new(bits, centers, stats)
}

pub fn pack(a: &PackArgs, ctx: &Ctx) -> CmdResult {
    let indices = parse_indices(&files::read_text(&a.indices)?)?;
    let cb = parse_codebook(&files::read_text(&a.codebook)?)?;
    let blob = serialize(&cb, &indices)?;
    files::write(&a.out, &blob)?;
    ctx.diag(format!("packed {} indices at {} bits into {} bytes", indices.len(), cb.bits(), blob.len()));
    Ok(())
}

pub fn unpack(a: &UnpackArgs, ctx: &Ctx) -> CmdResult {
    let (cb, indices): (Codebook<f64>, Vec<u32>) = deserialize(&files::read(&a.input)?)?;
    let mut text = String::with_capacity(indices.len() * 2);
    for i in &indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    files::write(&a.indices, text)?;
    files::write(&a.codebook, format_record(&codebook_record(&cb)))?;
    ctx.diag(format!("unpacked {} indices", indices.len()));
    Ok(())
}

pub fn inspect(a: &InspectArgs, _ctx: &Ctx) -> CmdResult {
    let bytes = files::read(&a.input)?;
    let header = read_header(&bytes)?;
    let (cb, indices): (Codebook<f64>, Vec<u32>) = deserialize(&bytes)?;
    let levels = header.bits.levels();
    let histogram = Assignment::from_indices(indices, &cb)?.histogram(levels);
    let bits = storage_bits(header.n, header.bits);
    let mut fields = vec![
        ("magic", "QPRM".to_string()),
        ("version", header.version.to_string()),
        ("n", header.n.to_string()),
        ("header_bytes", HEADER_LEN.to_string()),
        ("blob_bytes", bytes.len().to_string()),
        ("storage_bits", bits.to_string()),
        ("fp16_bits", fp16_baseline_bits(header.n).to_string()),
        ("compression_ratio", format!("{:.4}", fp16_baseline_bits(header.n) as f64 / bits as f64)),
    ];
    // codebook_record leads with bits, mu, sigma, centers
    fields.extend(codebook_record(&cb).into_iter().filter(|(k, _)| *k != "levels"));
    fields.push(("index_histogram", histogram.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")));
    print!("{}", format_record(&fields));
    Ok(())
}
