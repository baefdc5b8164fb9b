use num_complex::Complex32;

use crate::chanlab::{CsiMatrix, CsiPair};
use crate::error::Result;

/// Magnitude/phase split: the mean magnitude of both polarizations is
/// shared, each polarization keeps its own phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DrMp {
    pub rows: usize,
    pub cols: usize,
    pub shared: Vec<f32>,
    pub phase_v: Vec<f32>,
    pub phase_h: Vec<f32>,
}

pub fn dr_mp_transform(pair: &CsiPair) -> DrMp {
    let (v, h) = (pair.h_v.as_slice(), pair.h_h.as_slice());
    DrMp {
        rows: pair.n_s(),
        cols: pair.width(),
        shared: v.iter().zip(h).map(|(a, b)| 0.5 * (a.norm() + b.norm())).collect(),
        phase_v: v.iter().map(|c| c.arg()).collect(),
        phase_h: h.iter().map(|c| c.arg()).collect(),
    }
}

pub fn dr_mp_inverse(t: &DrMp) -> Result<CsiPair> {
    let build = |phase: &[f32]| {
        let data = t
            .shared
            .iter()
            .zip(phase)
            .map(|(&m, &p)| Complex32::from_polar(m, p))
            .collect();
        CsiMatrix::from_vec(t.rows, t.cols, data)
    };
    CsiPair::new(build(&t.phase_v)?, build(&t.phase_h)?)
}

/// Absolute-value/sign split of one polarization's stacked real and
/// imaginary parts. Zero carries sign `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrAs {
    pub rows: usize,
    pub cols: usize,
    /// `[2, rows, cols]`: absolute real parts, then absolute imaginary parts.
    pub shared: Vec<f32>,
    pub signs: Vec<i8>,
}

fn sign(x: f32) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

pub fn dr_as_transform(m: &CsiMatrix) -> DrAs {
    let stacked: Vec<f32> = m
        .as_slice()
        .iter()
        .map(|c| c.re)
        .chain(m.as_slice().iter().map(|c| c.im))
        .collect();
    DrAs {
        rows: m.rows(),
        cols: m.cols(),
        shared: stacked.iter().map(|x| x.abs()).collect(),
        signs: stacked.iter().map(|&x| sign(x)).collect(),
    }
}

pub fn dr_as_inverse(t: &DrAs) -> Result<CsiMatrix> {
    let vals: Vec<f32> = t.shared.iter().zip(&t.signs).map(|(&a, &s)| a * f32::from(s)).collect();
    let plane = t.rows * t.cols;
    let data = (0..plane).map(|i| Complex32::new(vals[i], vals[plane + i])).collect();
    CsiMatrix::from_vec(t.rows, t.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanlab::{generate_dataset, wrap_phase, ScenarioConfig};

    /// A few f32 ulps at pi.
    const PHASE_ROUNDING: f64 = 1e-6;

    #[test]
    fn mp_is_exact_for_equal_polarizations() {
        let ds = generate_dataset(&ScenarioConfig::cdl_a_like(), 2, 4, 8, 1).unwrap();
        let p = CsiPair::new(ds.samples[0].h_v.clone(), ds.samples[0].h_v.clone()).unwrap();
        let back = dr_mp_inverse(&dr_mp_transform(&p)).unwrap();
        for (a, b) in back.h_v.as_slice().iter().zip(p.h_v.as_slice()) {
            assert!((a - b).norm() <= 1e-5 * b.norm().max(1.0));
        }
    }

    #[test]
    fn mp_keeps_phase_and_halves_the_magnitude_gap() {
        let ds = generate_dataset(&ScenarioConfig::cdl_c_like(), 20, 4, 8, 2).unwrap();
        for p in &ds.samples {
            let t = dr_mp_transform(p);
            let back = dr_mp_inverse(&t).unwrap();
            for i in 0..t.shared.len() {
                let (v, h, r) = (p.h_v.as_slice()[i], p.h_h.as_slice()[i], back.h_v.as_slice()[i]);
                let gap = (v.norm() - h.norm()).abs();
                assert!((r.norm() - v.norm()).abs() <= 0.5 * gap + 1e-5);
                if v.norm() > 1e-6 {
                    let dphase = wrap_phase(f64::from(r.arg()) - f64::from(t.phase_v[i]));
                    assert!(dphase.abs() <= PHASE_ROUNDING, "{dphase}");
                }
            }
        }
    }

    #[test]
    fn as_roundtrip_is_exact_and_zero_is_positive() {
        let m = CsiMatrix::from_vec(
            1,
            3,
            vec![Complex32::new(0.0, -1.5), Complex32::new(-2.0, 0.25), Complex32::new(-0.0, 0.0)],
        )
        .unwrap();
        let t = dr_as_transform(&m);
        assert_eq!(t.signs, vec![1, -1, 1, -1, 1, 1]);
        let back = dr_as_inverse(&t).unwrap();
        assert_eq!(back.as_slice()[..2], m.as_slice()[..2]);
        // The shared part of an already nonnegative input is unchanged.
        let shared_again = dr_as_transform(&dr_as_inverse(&DrAs { signs: vec![1; 6], ..t.clone() }).unwrap());
        assert_eq!(shared_again.shared, t.shared);
    }
}
