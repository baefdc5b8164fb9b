//! Dual-polarized channel datasets: generation, characterization (GCS),
//! normalization and on-disk persistence.

mod calibrate;
mod gcs;
mod generate;
mod io;
mod normalize;

pub use calibrate::{calibrate_kappa, Calibration};
pub use gcs::{gcs, gcs_profile, gcs_real, mean_profile, wrap_phase, GcsProfile};
pub use generate::{generate_dataset, generate_pair, GENERATOR_VERSION};
pub use io::{manifest_path, read_dataset, write_dataset, MAGIC};
pub use normalize::{apply_normalizer, denormalize_pair, fit_normalizer, invert_normalizer, NormScaler, NormStats};

use num_complex::Complex32;

use crate::error::{Error, Result};

/// Multipath scenario description. Delays are expressed in units of the
/// inverse system bandwidth, so a delay of 1.0 rotates the phase by one full
/// turn across the subband grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_paths: usize,
    /// 1 keeps per-path phases identical across polarizations, 0 draws them
    /// independently.
    pub kappa: f64,
    pub delay_spread: f64,
    /// Standard deviation of per-path departure angles around the cluster
    /// centre, in radians.
    pub angle_spread: f64,
    pub target_gcs: Option<f64>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::Config(format!("kappa {} outside [0, 1]", self.kappa)));
        }
        if !(self.delay_spread > 0.0) {
            return Err(Error::Config("delay_spread must be positive".into()));
        }
        if !(self.angle_spread >= 0.0) {
            return Err(Error::Config("angle_spread must be non-negative".into()));
        }
        if let Some(t) = self.target_gcs {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target_gcs {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Low delay spread, slow UE. Target magnitude GCS 0.936.
    pub fn cdl_a_like() -> Self {
        ScenarioConfig {
            name: "cdl-a".into(),
            n_paths: 8,
            kappa: 0.745,
            delay_spread: 0.3,
            angle_spread: 0.3,
            target_gcs: Some(0.936),
        }
    }

    /// Medium delay spread. Target magnitude GCS 0.869.
    pub fn cdl_b_like() -> Self {
        ScenarioConfig {
            name: "cdl-b".into(),
            n_paths: 8,
            kappa: 0.5,
            delay_spread: 1.0,
            angle_spread: 0.3,
            target_gcs: Some(0.869),
        }
    }

    /// Large delay spread. Target magnitude GCS 0.741.
    pub fn cdl_c_like() -> Self {
        ScenarioConfig {
            name: "cdl-c".into(),
            n_paths: 8,
            kappa: 0.0,
            delay_spread: 3.0,
            angle_spread: 0.3,
            target_gcs: Some(0.741),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cdl-a" | "a" => Some(Self::cdl_a_like()),
            "cdl-b" | "b" => Some(Self::cdl_b_like()),
            "cdl-c" | "c" => Some(Self::cdl_c_like()),
            _ => None,
        }
    }
}

/// Row-major complex matrix; rows are subbands, columns antennas of one
/// polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex32>,
}

impl CsiMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsiMatrix {
            rows,
            cols,
            data: vec![Complex32::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CsiMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CsiMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[Complex32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex32 {
        self.data[r * self.cols + c]
    }

    pub fn map(&self, f: impl Fn(Complex32) -> Complex32) -> Self {
        CsiMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data
            .iter()
            .map(|z| f64::from(z.re).powi(2) + f64::from(z.im).powi(2))
            .sum()
    }
}

/// One sample: vertical and horizontal polarization responses.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiPair {
    pub h_v: CsiMatrix,
    pub h_h: CsiMatrix,
}

impl CsiPair {
    pub fn new(h_v: CsiMatrix, h_h: CsiMatrix) -> Result<Self> {
        if h_v.rows != h_h.rows || h_v.cols != h_h.cols {
            return Err(Error::Dimension(format!(
                "polarizations disagree: {}x{} vs {}x{}",
                h_v.rows, h_v.cols, h_h.rows, h_h.cols
            )));
        }
        if !h_v.is_finite() || !h_h.is_finite() {
            return Err(Error::Dimension("non-finite channel entry".into()));
        }
        Ok(CsiPair { h_v, h_h })
    }

    pub fn n_s(&self) -> usize {
        self.h_v.rows
    }

    pub fn width(&self) -> usize {
        self.h_v.cols
    }

    /// Full-array channel of subband `k`: vertical antennas then horizontal.
    pub fn subband_vector(&self, k: usize) -> Vec<Complex32> {
        let mut v = self.h_v.row(k).to_vec();
        v.extend_from_slice(self.h_h.row(k));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    pub n_s: usize,
    /// Total dual-polarized antenna count; each polarization has n_t / 2.
    pub n_t: usize,
    pub samples: Vec<CsiPair>,
    pub scenario: ScenarioConfig,
    pub scaler: Option<NormScaler>,
    /// Seed the samples were generated from, when known.
    pub seed: Option<u64>,
}

impl CsiDataset {
    pub fn new(n_s: usize, n_t: usize, scenario: ScenarioConfig) -> Result<Self> {
        check_dims(n_s, n_t)?;
        Ok(CsiDataset {
            n_s,
            n_t,
            samples: Vec::new(),
            scenario,
            scaler: None,
            seed: None,
        })
    }

    pub fn width(&self) -> usize {
        self.n_t / 2
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, pair: CsiPair) -> Result<()> {
        if pair.n_s() != self.n_s || pair.width() != self.width() {
            return Err(Error::Dimension(format!(
                "sample is {}x{}, dataset expects {}x{}",
                pair.n_s(),
                pair.width(),
                self.n_s,
                self.width()
            )));
        }
        self.samples.push(pair);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.n_s, self.n_t)?;
        for (i, s) in self.samples.iter().enumerate() {
            if s.n_s() != self.n_s || s.width() != self.width() || s.h_h.rows != s.h_v.rows || s.h_h.cols != s.h_v.cols {
                return Err(Error::Dimension(format!("sample {i} does not match the dataset grid")));
            }
        }
        Ok(())
    }

    /// Splits off the samples at `range` into a new dataset with the same
    /// metadata.
    pub fn subset(&self, range: std::ops::Range<usize>) -> CsiDataset {
        CsiDataset {
            samples: self.samples[range].to_vec(),
            ..self.clone_meta()
        }
    }

    pub fn clone_meta(&self) -> CsiDataset {
        CsiDataset {
            n_s: self.n_s,
            n_t: self.n_t,
            samples: Vec::new(),
            scenario: self.scenario.clone(),
            scaler: self.scaler,
            seed: self.seed,
        }
    }
}

pub(crate) fn check_dims(n_s: usize, n_t: usize) -> Result<()> {
    if n_s == 0 || n_t == 0 {
        return Err(Error::Dimension(format!("grid {n_s}x{n_t} is empty")));
    }
    if !n_t.is_multiple_of(2) {
        return Err(Error::Dimension(format!("n_t = {n_t} must be even for dual polarization")));
    }
    Ok(())
}
