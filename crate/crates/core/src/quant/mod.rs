//! Uniform scalar quantization of the latent triple with separate bit depths
//! for the shared stream and the two specific streams, plus feedback bit
//! accounting and the packed feedback format.

use std::fmt;

use crate::chanlab::CsiPair;
use crate::error::{Error, Result};
use crate::model::{maps_to_pairs, pairs_to_maps, LatentBatch, LatentTriple, Network};
use crate::nn::ParamSet;

pub const MAX_BITS: u8 = 16;
/// Relative widening of fitted ranges on each side.
pub const RANGE_MARGIN: f64 = 0.01;

const CHUNK: usize = 100;

/// Nominal feedback bits `(2 n_s n_t / (3 sigma)) (q_sa + 2 q_sp)`, using
/// the possibly fractional stream length.
pub fn feedback_bits(n_s: usize, n_t: usize, sigma: f64, q_sa: u8, q_sp: u8) -> f64 {
    let per_stream_bits = (2 * n_s * n_t) as f64 * (u32::from(q_sa) + 2 * u32::from(q_sp)) as f64;
    per_stream_bits / (3.0 * sigma)
}

/// Bits actually sent for integer stream length `m`.
pub fn actual_bits(m: usize, q_sa: u8, q_sp: u8) -> u64 {
    m as u64 * (u64::from(q_sa) + 2 * u64::from(q_sp))
}

/// Affine operating range of one stream's quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRange {
    pub lo: f64,
    pub hi: f64,
}

impl StreamRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("quantizer range needs lo < hi, got ({lo}, {hi})")));
        }
        Ok(StreamRange { lo, hi })
    }

    /// Min/max of `values` widened by [`RANGE_MARGIN`] of the span on each
    /// side. A constant stream gets a unit-width range around its value.
    pub fn fit(values: &[f32]) -> Result<Self> {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v.into()), hi.max(v.into()))
        });
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config("cannot fit a range to empty or non-finite values".into()));
        }
        let span = hi - lo;
        if span == 0.0 {
            return StreamRange::new(lo - 0.5, hi + 0.5);
        }
        StreamRange::new(lo - RANGE_MARGIN * span, hi + RANGE_MARGIN * span)
    }

    /// Largest dequantization error for an in-range value at `q` bits.
    pub fn error_bound(&self, q: u8) -> f64 {
        (self.hi - self.lo) / (2.0 * levels(q) as f64)
    }
}

fn check_bits(q: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&q) {
        return Err(Error::Config(format!("bit depth must be in 1..={MAX_BITS}, got {q}")));
    }
    Ok(())
}

/// `2^q - 1`, the largest code.
fn levels(q: u8) -> u32 {
    (1u32 << q) - 1
}

/// Codes in `[0, 2^q - 1]`; out-of-range values clamp to the end codes.
pub fn quantize(values: &[f64], q: u8, range: StreamRange) -> Result<Vec<u16>> {
    check_bits(q)?;
    let top = f64::from(levels(q));
    let span = range.hi - range.lo;
    Ok(values
        .iter()
        .map(|&v| {
            let t = (v.clamp(range.lo, range.hi) - range.lo) / span;
            (t * top).round() as u16
        })
        .collect())
}

pub fn dequantize(codes: &[u16], q: u8, range: StreamRange) -> Result<Vec<f64>> {
    check_bits(q)?;
    let top = f64::from(levels(q));
    if let Some(&c) = codes.iter().find(|&&c| u32::from(c) > levels(q)) {
        return Err(Error::Format(format!("code {c} exceeds {q}-bit range")));
    }
    let span = range.hi - range.lo;
    Ok(codes.iter().map(|&c| range.lo + f64::from(c) / top * span).collect())
}

/// Bit depths and ranges of the three streams.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantConfig {
    pub q_sa: u8,
    pub q_sp: u8,
    /// Ranges of `z_w`, `z_v`, `z_h`.
    pub ranges: [StreamRange; 3],
}

impl QuantConfig {
    pub fn new(q_sa: u8, q_sp: u8, ranges: [StreamRange; 3]) -> Result<Self> {
        check_bits(q_sa)?;
        check_bits(q_sp)?;
        Ok(QuantConfig { q_sa, q_sp, ranges })
    }

    /// Fits each stream's range on training latents.
    pub fn fit(q_sa: u8, q_sp: u8, latents: &LatentBatch<f32>) -> Result<Self> {
        let [w, v, h] = latents.streams();
        Self::new(q_sa, q_sp, [StreamRange::fit(w)?, StreamRange::fit(v)?, StreamRange::fit(h)?])
    }

    pub fn stream_bits(&self) -> [u8; 3] {
        [self.q_sa, self.q_sp, self.q_sp]
    }

    /// Quantize-dequantize every stream of a latent batch.
    pub fn roundtrip(&self, latent: &LatentBatch<f32>) -> Result<LatentBatch<f32>> {
        let mut out = latent.clone();
        for ((stream, q), range) in out.streams_mut().into_iter().zip(self.stream_bits()).zip(self.ranges) {
            let vals: Vec<f64> = stream.iter().map(|&v| v.into()).collect();
            let back = dequantize(&quantize(&vals, q, range)?, q, range)?;
            stream.iter_mut().zip(back).for_each(|(s, b)| *s = b as f32);
        }
        Ok(out)
    }
}

/// Nominal and transmitted bit counts for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitReport {
    pub q_sa: u8,
    pub q_sp: u8,
    pub nominal: f64,
    pub actual: u64,
}

impl BitReport {
    pub fn new(n_s: usize, n_t: usize, sigma: f64, m: usize, q_sa: u8, q_sp: u8) -> Self {
        BitReport {
            q_sa,
            q_sp,
            nominal: feedback_bits(n_s, n_t, sigma, q_sa, q_sp),
            actual: actual_bits(m, q_sa, q_sp),
        }
    }
}

impl fmt::Display for BitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "q_sa={} q_sp={} nominal_bits={} actual_bits={}",
            self.q_sa, self.q_sp, self.nominal, self.actual
        )
    }
}

/// Packs `q`-bit codes little-endian, least significant bit first, padding
/// the last byte with zeros.
pub fn pack_codes(codes: &[u16], q: u8) -> Vec<u8> {
    let mut out = vec![0u8; (codes.len() * q as usize).div_ceil(8)];
    let mut bit = 0usize;
    for &c in codes {
        for b in 0..q {
            if (c >> b) & 1 == 1 {
                out[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
    out
}

pub fn unpack_codes(bytes: &[u8], q: u8, count: usize) -> Result<Vec<u16>> {
    let need = (count * q as usize).div_ceil(8);
    if bytes.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut c = 0u16;
        for b in 0..q {
            if (bytes[bit / 8] >> (bit % 8)) & 1 == 1 {
                c |= 1 << b;
            }
            bit += 1;
        }
        out.push(c);
    }
    Ok(out)
}

/// Serializes one sample's feedback: per stream a bit-depth byte, the range
/// as two little-endian `f64`, then the packed codes.
pub fn encode_feedback(triple: &LatentTriple<f32>, cfg: &QuantConfig) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for ((stream, q), range) in [&triple.z_w, &triple.z_v, &triple.z_h].into_iter().zip(cfg.stream_bits()).zip(cfg.ranges) {
        let vals: Vec<f64> = stream.iter().map(|&v| v.into()).collect();
        out.push(q);
        out.extend_from_slice(&range.lo.to_le_bytes());
        out.extend_from_slice(&range.hi.to_le_bytes());
        out.extend_from_slice(&pack_codes(&quantize(&vals, q, range)?, q));
    }
    Ok(out)
}

/// Inverse of [`encode_feedback`] for streams of length `m`.
pub fn decode_feedback(bytes: &[u8], m: usize) -> Result<LatentTriple<f32>> {
    let mut pos = 0;
    let mut streams = Vec::with_capacity(3);
    for _ in 0..3 {
        if bytes.len() < pos + 17 {
            return Err(Error::Truncated {
                expected: pos + 17,
                found: bytes.len(),
            });
        }
        let q = bytes[pos];
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("eight bytes"));
        let range = StreamRange::new(f(pos + 1), f(pos + 9))?;
        pos += 17;
        check_bits(q)?;
        let len = (m * q as usize).div_ceil(8);
        let codes = unpack_codes(&bytes[pos..], q, m)?;
        pos += len;
        streams.push(dequantize(&codes, q, range)?.into_iter().map(|v| v as f32).collect::<Vec<f32>>());
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing feedback bytes", bytes.len() - pos)));
    }
    let z_h = streams.pop().expect("three streams");
    let z_v = streams.pop().expect("three streams");
    let z_w = streams.pop().expect("three streams");
    Ok(LatentTriple { z_w, z_v, z_h })
}

/// Recovered (normalized) pairs and the bit budget of quantized inference.
#[derive(Debug, Clone)]
pub struct QuantizedOutput {
    pub recovered: Vec<CsiPair>,
    pub bits: BitReport,
}

/// Encoder, per-stream quantize and dequantize, decoder; evaluation mode
/// throughout. `pairs` are normalized.
pub fn quantized_inference(
    net: &Network,
    params: &ParamSet<f32>,
    buffers: &ParamSet<f32>,
    pairs: &[CsiPair],
    cfg: &QuantConfig,
) -> Result<QuantizedOutput> {
    let refs: Vec<&CsiPair> = pairs.iter().collect();
    let (hv, hh) = pairs_to_maps::<f32>(&refs)?;
    let latent = net.encode(params, buffers, &hv, &hh, CHUNK)?;
    let (rv, rh) = net.decode(params, buffers, &cfg.roundtrip(&latent)?, CHUNK)?;
    let c = &net.config;
    Ok(QuantizedOutput {
        recovered: maps_to_pairs(&rv, &rh)?,
        bits: BitReport::new(c.n_s, c.n_t, c.sigma, c.latent_len, cfg.q_sa, cfg.q_sp),
    })
}
