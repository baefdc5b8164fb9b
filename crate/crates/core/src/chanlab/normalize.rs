use num_complex::Complex32;

use super::{CsiDataset, CsiMatrix, CsiPair};
use crate::error::{Error, Result};

/// Global affine map of real and imaginary parts onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormScaler {
    pub lo: f64,
    pub hi: f64,
}

impl NormScaler {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::DegenerateScaler { lo, hi });
        }
        Ok(NormScaler { lo, hi })
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Maps a raw value; returns the mapped value and whether it was clamped.
    pub fn forward(&self, x: f64) -> (f64, bool) {
        let y = (x - self.lo) / self.span();
        if y < 0.0 {
            (0.0, true)
        } else if y > 1.0 {
            (1.0, true)
        } else {
            (y, false)
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.lo + y * self.span()
    }
}

/// Counts of entries that fell outside the fitted range at apply time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormStats {
    pub values: usize,
    pub clamped: usize,
}

pub fn fit_normalizer(dataset: &CsiDataset) -> Result<NormScaler> {
    if dataset.scaler.is_some() {
        return Err(Error::Config("dataset is already normalized".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for pair in &dataset.samples {
        for z in pair.h_v.as_slice().iter().chain(pair.h_h.as_slice()) {
            for x in [f64::from(z.re), f64::from(z.im)] {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    NormScaler::new(lo, hi)
}

fn map_matrix(m: &CsiMatrix, f: impl Fn(f32) -> f32) -> CsiMatrix {
    m.map(|z| Complex32::new(f(z.re), f(z.im)))
}

pub fn apply_normalizer(dataset: &CsiDataset, scaler: &NormScaler) -> Result<(CsiDataset, NormStats)> {
    if dataset.scaler.is_some() {
        return Err(Error::Config("dataset is already normalized".into()));
    }
    let mut stats = NormStats::default();
    let mut out = dataset.clone_meta();
    out.scaler = Some(*scaler);
    out.samples.reserve(dataset.len());
    for pair in &dataset.samples {
        let mut convert = |m: &CsiMatrix| {
            let data: Vec<Complex32> = m
                .as_slice()
                .iter()
                .map(|z| {
                    let (re, cr) = scaler.forward(z.re.into());
                    let (im, ci) = scaler.forward(z.im.into());
                    stats.values += 2;
                    stats.clamped += usize::from(cr) + usize::from(ci);
                    Complex32::new(re as f32, im as f32)
                })
                .collect();
            CsiMatrix::from_vec(m.rows(), m.cols(), data)
        };
        let h_v = convert(&pair.h_v)?;
        let h_h = convert(&pair.h_h)?;
        out.samples.push(CsiPair { h_v, h_h });
    }
    Ok((out, stats))
}

pub fn invert_normalizer(dataset: &CsiDataset, scaler: &NormScaler) -> Result<CsiDataset> {
    if dataset.scaler.is_none() {
        return Err(Error::Config("dataset is not normalized".into()));
    }
    let mut out = dataset.clone_meta();
    out.scaler = None;
    out.samples = dataset.samples.iter().map(|p| denormalize_pair(p, scaler)).collect();
    Ok(out)
}

/// Maps one normalized pair back to channel units.
pub fn denormalize_pair(pair: &CsiPair, scaler: &NormScaler) -> CsiPair {
    let inv = |x: f32| scaler.inverse(x.into()) as f32;
    CsiPair {
        h_v: map_matrix(&pair.h_v, inv),
        h_h: map_matrix(&pair.h_h, inv),
    }
}
