//! Weight file formats and key/value text records.
//!
//! * Raw binary: consecutive little-endian `f32` values, with a sidecar file
//!   `<path>.meta` holding `key=value` lines (`format=f32le`, `count`, `shape`).
//! * Text: one value per line; blank lines and lines starting with `#` are skipped.
//!
//! Records are `key=value` lines, keys in a fixed order chosen by the writer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::quantizer::Codebook;
use crate::scalar::Scalar;
use crate::tensor::WeightTensor;

/// Sidecar metadata for a raw `f32` stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamMeta {
    pub count: usize,
    pub shape: Vec<usize>,
}

impl StreamMeta {
    pub fn to_record(&self) -> String {
        format_record(&[
            ("format", "f32le".to_string()),
            ("count", self.count.to_string()),
            ("shape", format_shape(&self.shape)),
        ])
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rec = parse_record(text)?;
        let get = |k: &str| {
            rec.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str()).ok_or_else(|| Error::Parse(format!("missing key {k}")))
        };
        let format = get("format")?;
        if format != "f32le" {
            return Err(Error::Parse(format!("unsupported stream format {format}")));
        }
        let count = get("count")?.parse::<usize>().map_err(|e| Error::Parse(format!("count: {e}")))?;
        let shape = match get("shape") {
            Ok(s) => parse_shape(s)?,
            Err(_) => vec![count],
        };
        Ok(Self { count, shape })
    }
}

pub fn format_shape(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|e| Error::Parse(format!("shape {s:?}: {e}"))))
        .collect()
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn decode_f32le(bytes: &[u8], meta: &StreamMeta) -> Result<WeightTensor<f32>> {
    if bytes.len() != meta.count * 4 {
        return Err(Error::LengthMismatch { expected: meta.count * 4, actual: bytes.len() });
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    WeightTensor::new(values, meta.shape.clone())
}

pub fn encode_f32le<T: Scalar>(values: &[T]) -> Vec<u8> {
    values.iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect()
}

pub fn parse_text<T: Scalar>(text: &str) -> Result<WeightTensor<T>> {
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Parse(format!("line {}: {e}", line_no + 1)))?;
        values.push(T::of(v));
    }
    WeightTensor::from_vec(values)
}

/// Shortest round-trip decimal representation, one value per line.
pub fn format_text<T: Scalar>(values: &[T]) -> String {
    let mut out = String::new();
    for v in values {
        writeln!(out, "{v}").expect("write to string");
    }
    out
}

/// Input encodings understood by [`read_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightFormat {
    F32le,
    Text,
}

impl WeightFormat {
    /// A sidecar next to the file means raw binary, otherwise text.
    pub fn detect(path: &Path) -> Self {
        if sidecar_path(path).exists() {
            WeightFormat::F32le
        } else {
            WeightFormat::Text
        }
    }
}

pub fn read_weights(path: &Path, format: WeightFormat) -> Result<WeightTensor<f32>> {
    match format {
        WeightFormat::F32le => {
            let meta = StreamMeta::parse(&fs::read_to_string(sidecar_path(path))?)?;
            decode_f32le(&fs::read(path)?, &meta)
        }
        WeightFormat::Text => parse_text(&fs::read_to_string(path)?),
    }
}

pub fn write_weights<T: Scalar>(path: &Path, w: &WeightTensor<T>, format: WeightFormat) -> Result<()> {
    match format {
        WeightFormat::F32le => {
            fs::write(path, encode_f32le(w.values()))?;
            let meta = StreamMeta { count: w.len(), shape: w.shape().to_vec() };
            fs::write(sidecar_path(path), meta.to_record())?;
        }
        WeightFormat::Text => fs::write(path, format_text(w.values()))?,
    }
    Ok(())
}

pub fn format_record(fields: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in fields {
        writeln!(out, "{k}={v}").expect("write to string");
    }
    out
}

pub fn parse_record(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {l:?}")))
        })
        .collect()
}

/// Codebook as a key/value record; centers comma-separated in normalized space.
pub fn codebook_record<T: Scalar>(cb: &Codebook<T>) -> Vec<(&'static str, String)> {
    let join = |v: &[T]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    vec![
        ("bits", cb.bits().to_string()),
        ("levels", cb.bits().levels().to_string()),
        ("mu", cb.stats().mu.to_string()),
        ("sigma", cb.stats().sigma.to_string()),
        ("centers", join(cb.centers())),
        ("dequantized_centers", join(&cb.dequantized_centers())),
    ]
}
