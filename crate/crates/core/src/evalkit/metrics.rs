use crate::chanlab::{CsiMatrix, CsiPair};
use crate::error::{Error, Result};

/// Reporting floor for perfect recovery.
pub const NMSE_FLOOR_DB: f64 = -120.0;

pub fn to_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * linear.log10()).max(NMSE_FLOOR_DB)
}

fn ratio(pred: &CsiMatrix, truth: &CsiMatrix) -> f64 {
    let err: f64 = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| {
            let d = a - b;
            d.re as f64 * d.re as f64 + d.im as f64 * d.im as f64
        })
        .sum();
    err / truth.frobenius_sq()
}

/// Linear NMSE of one sample: the mean of the two polarizations' squared
/// error ratios.
pub fn nmse_linear(pred: &CsiPair, truth: &CsiPair) -> f64 {
    0.5 * (ratio(&pred.h_v, &truth.h_v) + ratio(&pred.h_h, &truth.h_h))
}

fn check(pred: &[CsiPair], truth: &[CsiPair]) -> Result<()> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "{} recovered vs {} reference samples",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn per_sample_nmse_db(pred: &[CsiPair], truth: &[CsiPair]) -> Result<Vec<f64>> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| to_db(nmse_linear(p, t))).collect())
}

/// Sample-averaged linear NMSE, in dB.
pub fn nmse_db(pred: &[CsiPair], truth: &[CsiPair]) -> Result<f64> {
    check(pred, truth)?;
    let mean = pred.iter().zip(truth).map(|(p, t)| nmse_linear(p, t)).sum::<f64>() / truth.len() as f64;
    Ok(to_db(mean))
}

/// Empirical CDF as `(value, fraction <= value)` at each distinct value.
pub fn nmse_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    out
}

/// Smallest value whose CDF reaches `q`.
pub fn cdf_quantile(cdf: &[(f64, f64)], q: f64) -> Option<f64> {
    cdf.iter().find(|&&(_, f)| f >= q).map(|&(x, _)| x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanlab::{generate_dataset, ScenarioConfig};
    use num_complex::Complex32;
    use proptest::prelude::*;

    fn pairs() -> Vec<CsiPair> {
        generate_dataset(&ScenarioConfig::cdl_b_like(), 4, 4, 8, 3).unwrap().samples
    }

    fn scale(p: &CsiPair, c: Complex32) -> CsiPair {
        CsiPair::new(p.h_v.map(|x| x * c), p.h_h.map(|x| x * c)).unwrap()
    }

    #[test]
    fn reference_values() {
        let t = pairs();
        assert_eq!(nmse_db(&t, &t).unwrap(), NMSE_FLOOR_DB);
        let zero: Vec<CsiPair> = t.iter().map(|p| scale(p, Complex32::new(0.0, 0.0))).collect();
        assert!(nmse_db(&zero, &t).unwrap().abs() < 1e-9);
        let shrunk: Vec<CsiPair> = t.iter().map(|p| scale(p, Complex32::new(0.9, 0.0))).collect();
        assert!((nmse_db(&shrunk, &t).unwrap() + 20.0).abs() < 1e-4);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(nmse_cdf(&[-10.0]), vec![(-10.0, 1.0)]);
        let v = [-3.0, -1.0, -2.0, -5.0, -4.0];
        let doubled: Vec<f64> = v.iter().chain(&v).copied().collect();
        assert_eq!(nmse_cdf(&v), nmse_cdf(&doubled));
        assert_eq!(cdf_quantile(&nmse_cdf(&v), 0.5), Some(-3.0));
    }

    proptest! {
        #[test]
        fn common_scaling_leaves_nmse_unchanged(re in -3.0f32..3.0, im in -3.0f32..3.0) {
            prop_assume!(re.abs() + im.abs() > 0.1);
            let t = pairs();
            let p: Vec<CsiPair> = t.iter().map(|x| scale(x, Complex32::new(0.8, 0.1))).collect();
            let c = Complex32::new(re, im);
            let a = nmse_db(&p, &t).unwrap();
            let ts: Vec<CsiPair> = t.iter().map(|x| scale(x, c)).collect();
            let ps: Vec<CsiPair> = p.iter().map(|x| scale(x, c)).collect();
            prop_assert!((a - nmse_db(&ps, &ts).unwrap()).abs() < 1e-3);
        }

        #[test]
        fn cdf_is_monotone_and_ends_at_one(v in proptest::collection::vec(-60.0f64..10.0, 1..50)) {
            let cdf = nmse_cdf(&v);
            prop_assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert!(cdf[0].1 > 0.0);
            prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        }
    }
}
