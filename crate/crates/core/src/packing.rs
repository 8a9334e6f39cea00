//! Sub-byte index packing and the `QPRM` blob format.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size          | field                                   |
//! |--------|---------------|-----------------------------------------|
//! | 0      | 4             | magic `b"QPRM"`                         |
//! | 4      | 1             | format version (`1`)                    |
//! | 5      | 1             | bits per index `b`                      |
//! | 6      | 8             | element count `N` (u64)                 |
//! | 14     | 4             | `mu` (IEEE-754 binary32)                |
//! | 18     | 4             | `sigma` (IEEE-754 binary32)             |
//! | 22     | `2^b * 2`     | codebook centers, binary16, ascending   |
//! | ...    | `ceil(N*b/8)` | packed indices                          |
//!
//! Index `j` occupies stream bits `[j*b, (j+1)*b)`, where stream bit `k` is bit
//! `k % 8` (least significant first) of byte `k / 8`. Unused high bits of the
//! last byte are zero.

use half::f16;

use crate::error::{Error, Result};
use crate::quantizer::{Bits, Codebook, NormStats};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"QPRM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;

/// Packs indices `b` bits apiece, least significant bit first.
pub fn pack(indices: &[u32], bits: Bits) -> Result<Vec<u8>> {
    let b = bits.get() as usize;
    let limit = bits.levels() as u32;
    let mut out = vec![0u8; payload_len(indices.len(), bits)];
    for (j, &index) in indices.iter().enumerate() {
        if index >= limit {
            return Err(Error::IndexOverflow { index, position: j, bits: bits.get() });
        }
        let bit = j * b;
        // b divides 8, so an index never straddles a byte
        out[bit / 8] |= (index as u8) << (bit % 8);
    }
    Ok(out)
}

/// Inverse of [`pack`]. `payload` must be exactly `ceil(n*b/8)` bytes.
pub fn unpack(payload: &[u8], n: usize, bits: Bits) -> Result<Vec<u32>> {
    let expected = payload_len(n, bits);
    if payload.len() != expected {
        return Err(Error::LengthMismatch { expected, actual: payload.len() });
    }
    let b = bits.get() as usize;
    let mask = (bits.levels() - 1) as u8;
    Ok((0..n)
        .map(|j| {
            let bit = j * b;
            ((payload[bit / 8] >> (bit % 8)) & mask) as u32
        })
        .collect())
}

pub fn payload_len(n: usize, bits: Bits) -> usize {
    (n * bits.get() as usize).div_ceil(8)
}

/// Storage cost of `n` indices plus a half-precision codebook: `b*N + 2^b*16`.
///
/// The fixed 22-byte header is not included.
pub fn storage_bits(n: u64, bits: Bits) -> u64 {
    bits.get() as u64 * n + bits.levels() as u64 * 16
}

/// Bits needed to store `n` weights at half precision.
pub fn fp16_baseline_bits(n: u64) -> u64 {
    16 * n
}

/// Header fields of a serialized blob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobHeader {
    pub version: u8,
    pub bits: Bits,
    pub n: u64,
    pub mu: f32,
    pub sigma: f32,
}

impl BlobHeader {
    /// Total serialized length implied by the header.
    pub fn blob_len(&self) -> Result<usize> {
        let n = usize::try_from(self.n).map_err(|_| Error::BadShape(format!("count {} too large", self.n)))?;
        Ok(HEADER_LEN + self.bits.levels() * 2 + payload_len(n, self.bits))
    }
}

pub fn read_header(bytes: &[u8]) -> Result<BlobHeader> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let version = bytes[4];
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let bits = Bits::new(bytes[5] as u32)?;
    let n = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let mu = f32::from_le_bytes(bytes[14..18].try_into().expect("4 bytes"));
    let sigma = f32::from_le_bytes(bytes[18..22].try_into().expect("4 bytes"));
    Ok(BlobHeader { version, bits, n, mu, sigma })
}

/// Encodes a codebook and its indices. Centers are rounded to half precision
/// (round to nearest, ties to even) and `mu`/`sigma` to single precision.
pub fn serialize<T: Scalar>(cb: &Codebook<T>, indices: &[u32]) -> Result<Vec<u8>> {
    let bits = cb.bits();
    let halves: Vec<f16> = cb.centers().iter().map(|c| f16::from_f64(c.as_f64())).collect();
    if halves.iter().any(|h| !h.is_finite()) {
        return Err(Error::DegenerateTensor("codebook center overflows half precision".into()));
    }
    if halves.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegenerateTensor("codebook centers collide at half precision".into()));
    }
    let payload = pack(indices, bits)?;
    let stats = cb.stats();
    let mut out = Vec::with_capacity(HEADER_LEN + halves.len() * 2 + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(bits.get());
    out.extend_from_slice(&(indices.len() as u64).to_le_bytes());
    out.extend_from_slice(&(stats.mu.as_f64() as f32).to_le_bytes());
    out.extend_from_slice(&(stats.sigma.as_f64() as f32).to_le_bytes());
    for h in &halves {
        out.extend_from_slice(&h.to_le_bytes());
    }
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes a blob produced by [`serialize`].
pub fn deserialize<T: Scalar>(bytes: &[u8]) -> Result<(Codebook<T>, Vec<u32>)> {
    let header = read_header(bytes)?;
    let total = header.blob_len()?;
    if bytes.len() < total {
        return Err(Error::Truncated { needed: total, available: bytes.len() });
    }
    if bytes.len() > total {
        return Err(Error::LengthMismatch { expected: total, actual: bytes.len() });
    }
    let levels = header.bits.levels();
    let book_end = HEADER_LEN + levels * 2;
    let centers = bytes[HEADER_LEN..book_end]
        .chunks_exact(2)
        .map(|c| T::of(f16::from_le_bytes([c[0], c[1]]).to_f64()))
        .collect();
    let stats = NormStats { mu: T::of(header.mu as f64), sigma: T::of(header.sigma as f64) };
    let cb = Codebook::new(header.bits, centers, stats)?;
    let indices = unpack(&bytes[book_end..], header.n as usize, header.bits)?;
    Ok((cb, indices))
}
