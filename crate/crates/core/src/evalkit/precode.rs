use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;

use crate::chanlab::CsiPair;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

const RIDGE: f64 = 1e-9;
/// Smallest acceptable ratio of the Gram matrix's extreme eigenvalues
/// before switching to the ridge-regularized inverse.
const MIN_CONDITION: f64 = 1e-12;

/// Zero-forcing precoder `V = H^H (H H^H)^{-1}` with unit-norm columns.
/// `H` holds one user channel per row.
#[derive(Debug, Clone)]
pub struct Precoder {
    pub v: DMatrix<Complex64>,
    /// Set when the Gram matrix was singular and a ridge was added.
    pub regularized: bool,
}

fn stack(users: &[Vec<Complex64>]) -> Result<DMatrix<Complex64>> {
    let k = users.len();
    let n = users.first().map(Vec::len).ok_or_else(|| Error::Dimension("no users".into()))?;
    if users.iter().any(|u| u.len() != n) {
        return Err(Error::Dimension("user channels of unequal length".into()));
    }
    Ok(DMatrix::from_fn(k, n, |r, c| users[r][c]))
}

pub fn zf_precode(users: &[Vec<Complex64>]) -> Result<Precoder> {
    let h = stack(users)?;
    let k = h.nrows();
    if k > h.ncols() {
        return Err(Error::Dimension(format!("{k} users exceed {} transmit antennas", h.ncols())));
    }
    let hh = h.adjoint();
    let gram = &h * &hh;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let well_posed = hi > 0.0 && lo > MIN_CONDITION * hi;
    let (inv, regularized) = match well_posed.then(|| gram.clone().try_inverse()).flatten() {
        Some(inv) => (inv, false),
        None => {
            let ridge = gram + DMatrix::<Complex64>::identity(k, k) * Complex64::new(RIDGE, 0.0);
            let inv = ridge
                .try_inverse()
                .ok_or_else(|| Error::Inconsistent("regularized Gram matrix is singular".into()))?;
            (inv, true)
        }
    };
    let mut v = hh * inv;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }
    Ok(Precoder { v, regularized })
}

/// Per-user rates in bits/s/Hz with total power `snr` (linear) split evenly
/// over the users and unit noise.
pub fn achievable_rate(users: &[Vec<Complex64>], precoder: &Precoder, snr: f64) -> Result<Vec<f64>> {
    let h = stack(users)?;
    let k = h.nrows();
    if precoder.v.nrows() != h.ncols() || precoder.v.ncols() != k {
        return Err(Error::Dimension("precoder does not match the channel".into()));
    }
    let gains = &h * &precoder.v;
    let p = snr / k as f64;
    Ok((0..k)
        .map(|i| {
            let signal = p * gains[(i, i)].norm_sqr();
            let interference: f64 = (0..k).filter(|&j| j != i).map(|j| p * gains[(i, j)].norm_sqr()).sum();
            (1.0 + signal / (interference + 1.0)).log2()
        })
        .collect())
}

/// Channel of every listed sample at subband `k`: both polarizations'
/// antenna rows side by side.
pub fn subband_users(pairs: &[&CsiPair], k: usize) -> Vec<Vec<Complex64>> {
    pairs
        .iter()
        .map(|p| {
            p.subband_vector(k)
                .iter()
                .map(|z| Complex64::new(z.re.into(), z.im.into()))
                .collect()
        })
        .collect()
}

/// Mean per-user rate against SNR with precoders built from the true and
/// from the recovered channels, both evaluated on the true channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub snr_db: Vec<f64>,
    pub perfect: Vec<f64>,
    pub recovered: Vec<f64>,
    pub trials: usize,
    pub users: usize,
    /// Channel uses whose precoder needed the ridge.
    pub regularized: usize,
}

impl RateTable {
    /// Builds the table from `trials` draws of `users` distinct samples.
    /// Every subband of a draw is one channel use.
    pub fn simulate(
        truth: &[CsiPair],
        recovered: &[CsiPair],
        users: usize,
        snr_db: &[f64],
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        if truth.len() != recovered.len() {
            return Err(Error::Dimension(format!("{} true vs {} recovered samples", truth.len(), recovered.len())));
        }
        if users == 0 || users > truth.len() {
            return Err(Error::Config(format!("cannot draw {users} users from {} samples", truth.len())));
        }
        let mut rng = stream_rng(seed, Stream::Evaluation);
        let mut perfect = vec![0.0; snr_db.len()];
        let mut rec = vec![0.0; snr_db.len()];
        let mut regularized = 0;
        let mut uses = 0usize;
        let snr: Vec<f64> = snr_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
        for _ in 0..trials {
            let idx = sample(&mut rng, truth.len(), users).into_vec();
            let t: Vec<&CsiPair> = idx.iter().map(|&i| &truth[i]).collect();
            let r: Vec<&CsiPair> = idx.iter().map(|&i| &recovered[i]).collect();
            for k in 0..truth[idx[0]].n_s() {
                let (ht, hr) = (subband_users(&t, k), subband_users(&r, k));
                let (vt, vr) = (zf_precode(&ht)?, zf_precode(&hr)?);
                regularized += usize::from(vt.regularized) + usize::from(vr.regularized);
                for (s, &p) in snr.iter().enumerate() {
                    perfect[s] += achievable_rate(&ht, &vt, p)?.iter().sum::<f64>();
                    rec[s] += achievable_rate(&ht, &vr, p)?.iter().sum::<f64>();
                }
                uses += 1;
            }
        }
        let scale = 1.0 / (uses * users).max(1) as f64;
        perfect.iter_mut().chain(rec.iter_mut()).for_each(|v| *v *= scale);
        Ok(RateTable {
            snr_db: snr_db.to_vec(),
            perfect,
            recovered: rec,
            trials,
            users,
            regularized,
        })
    }

    /// Fraction of grid points where the recovered-channel rate does not
    /// exceed the true-channel rate.
    pub fn dominated_fraction(&self) -> f64 {
        let n = self.snr_db.len().max(1) as f64;
        self.perfect.iter().zip(&self.recovered).filter(|(p, r)| r <= p).count() as f64 / n
    }

    /// Slope of the true-channel rate between the last two grid points, in
    /// bits per 3 dB.
    pub fn high_snr_slope(&self) -> Option<f64> {
        let n = self.snr_db.len();
        (n >= 2).then(|| 3.0 * (self.perfect[n - 1] - self.perfect[n - 2]) / (self.snr_db[n - 1] - self.snr_db[n - 2]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("snr_db,rate_perfect,rate_recovered\n");
        for i in 0..self.snr_db.len() {
            s.push_str(&format!("{},{},{}\n", self.snr_db[i], self.perfect[i], self.recovered[i]));
        }
        s
    }
}
