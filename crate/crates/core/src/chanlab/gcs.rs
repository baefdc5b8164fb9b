use std::f64::consts::PI;

use num_complex::Complex64;

use super::{CsiMatrix, CsiPair};
use crate::error::{Error, Result};

/// Generalized cosine similarity between two complex matrices whose rows are
/// per-subband vectors: the mean over rows of |a_k^H b_k| / (|a_k| |b_k|).
pub fn gcs(a: &CsiMatrix, b: &CsiMatrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "gcs operands are {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut acc = 0.0;
    for k in 0..a.rows() {
        let (mut inner, mut na, mut nb) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        for (x, y) in a.row(k).iter().zip(b.row(k)) {
            let x = Complex64::new(x.re.into(), x.im.into());
            let y = Complex64::new(y.re.into(), y.im.into());
            inner += x.conj() * y;
            na += x.norm_sqr();
            nb += y.norm_sqr();
        }
        acc += row_similarity(inner.norm(), na, nb, k)?;
    }
    Ok(acc / a.rows() as f64)
}

/// Real-valued variant: rows of length `cols` in row-major slices, using the
/// absolute value of the real dot product.
pub fn gcs_real(a: &[f64], b: &[f64], cols: usize) -> Result<f64> {
    if a.len() != b.len() || cols == 0 || !a.len().is_multiple_of(cols) {
        return Err(Error::Dimension(format!(
            "gcs operands have {} and {} entries with row length {cols}",
            a.len(),
            b.len()
        )));
    }
    let rows = a.len() / cols;
    let mut acc = 0.0;
    for (k, (ra, rb)) in a.chunks_exact(cols).zip(b.chunks_exact(cols)).enumerate() {
        let inner: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        let na: f64 = ra.iter().map(|x| x * x).sum();
        let nb: f64 = rb.iter().map(|x| x * x).sum();
        acc += row_similarity(inner.abs(), na, nb, k)?;
    }
    Ok(acc / rows as f64)
}

fn row_similarity(inner_abs: f64, na: f64, nb: f64, subband: usize) -> Result<f64> {
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroRow { subband });
    }
    Ok((inner_abs / (na.sqrt() * nb.sqrt())).min(1.0))
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// GCS between polarizations for the complex data and four real views of it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GcsProfile {
    pub original: f64,
    pub real: f64,
    pub imag: f64,
    pub magnitude: f64,
    pub phase: f64,
}

impl GcsProfile {
    pub fn as_array(&self) -> [f64; 5] {
        [self.original, self.real, self.imag, self.magnitude, self.phase]
    }

    pub const LABELS: [&'static str; 5] = ["original", "real", "imag", "magnitude", "phase"];
}

fn view(m: &CsiMatrix, f: impl Fn(Complex64) -> f64) -> Vec<f64> {
    m.as_slice().iter().map(|z| f(Complex64::new(z.re.into(), z.im.into()))).collect()
}

pub fn gcs_profile(pair: &CsiPair) -> Result<GcsProfile> {
    let cols = pair.width();
    let (v, h) = (&pair.h_v, &pair.h_h);
    Ok(GcsProfile {
        original: gcs(v, h)?,
        real: gcs_real(&view(v, |z| z.re), &view(h, |z| z.re), cols)?,
        imag: gcs_real(&view(v, |z| z.im), &view(h, |z| z.im), cols)?,
        magnitude: gcs_real(&view(v, |z| z.norm()), &view(h, |z| z.norm()), cols)?,
        phase: gcs_real(&view(v, |z| wrap_phase(z.arg())), &view(h, |z| wrap_phase(z.arg())), cols)?,
    })
}

/// Mean and standard deviation of each profile component over `pairs`.
pub fn mean_profile<'a>(pairs: impl IntoIterator<Item = &'a CsiPair>) -> Result<(GcsProfile, GcsProfile)> {
    let mut sum = [0.0; 5];
    let mut sq = [0.0; 5];
    let mut n = 0usize;
    for p in pairs {
        let v = gcs_profile(p)?.as_array();
        for i in 0..5 {
            sum[i] += v[i];
            sq[i] += v[i] * v[i];
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Dimension("no samples to profile".into()));
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| (q / nf - m * m).max(0.0).sqrt()).collect();
    let pack = |v: &[f64]| GcsProfile {
        original: v[0],
        real: v[1],
        imag: v[2],
        magnitude: v[3],
        phase: v[4],
    };
    Ok((pack(&mean), pack(&std)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex32;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, v: &[(f32, f32)]) -> CsiMatrix {
        CsiMatrix::from_vec(rows, cols, v.iter().map(|&(r, i)| Complex32::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let x = mat(2, 2, &[(1.0, 2.0), (-0.5, 0.3), (0.2, 0.0), (4.0, -1.0)]);
        assert!((gcs(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_scaling_is_invisible() {
        let x = mat(2, 2, &[(1.0, 2.0), (-0.5, 0.3), (0.2, 0.0), (4.0, -1.0)]);
        let c = Complex32::new(-0.7, 2.5);
        let y = x.map(|z| z * c);
        assert!((gcs(&x, &y).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_rows_give_zero() {
        let a = mat(3, 2, &[(1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        let b = mat(3, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(gcs(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn zero_row_names_subband() {
        let a = mat(2, 2, &[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let b = mat(2, 2, &[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(gcs(&a, &b), Err(Error::ZeroRow { subband: 1 })));
    }

    #[test]
    fn identical_pair_profile_is_all_ones() {
        let x = mat(2, 3, &[(1.0, 2.0), (-0.5, 0.3), (0.2, -0.1), (4.0, -1.0), (0.3, 0.3), (-2.0, 1.0)]);
        let p = gcs_profile(&CsiPair::new(x.clone(), x).unwrap()).unwrap();
        for v in p.as_array() {
            assert!((v - 1.0).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn quarter_turn_profile_hand_example() {
        // h_v = [1+2j, 3-1j]; j*h_v = [-2+1j, 1+3j]
        let hv = mat(1, 2, &[(1.0, 2.0), (3.0, -1.0)]);
        let hh = hv.map(|z| z * Complex32::new(0.0, 1.0));
        let p = gcs_profile(&CsiPair::new(hv, hh).unwrap()).unwrap();
        assert!((p.original - 1.0).abs() < 1e-7);
        assert!((p.magnitude - 1.0).abs() < 1e-7);
        // |<[1,3],[-2,1]>| / (sqrt(10) sqrt(5)) = 1/sqrt(50)
        assert!((p.real - 1.0 / 50f64.sqrt()).abs() < 1e-7, "{}", p.real);
        // |<[2,-1],[1,3]>| / (sqrt(5) sqrt(10)) = 1/sqrt(50)
        assert!((p.imag - 1.0 / 50f64.sqrt()).abs() < 1e-7, "{}", p.imag);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_phase(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = CsiMatrix> {
        proptest::collection::vec((0.1f32..2.0, -2.0f32..2.0), rows * cols)
            .prop_map(move |v| CsiMatrix::from_vec(rows, cols, v.into_iter().map(|(a, b)| Complex32::new(a, b)).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn gcs_symmetric_bounded_and_scale_invariant(
            a in arb_matrix(3, 4),
            b in arb_matrix(3, 4),
            re in 0.2f32..3.0,
            im in -3.0f32..3.0,
        ) {
            let ab = gcs(&a, &b).unwrap();
            let ba = gcs(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let c = Complex32::new(re, im);
            let scaled = gcs(&a, &b.map(|z| z * c)).unwrap();
            prop_assert!((scaled - ab).abs() < 1e-5);
        }
    }
}
