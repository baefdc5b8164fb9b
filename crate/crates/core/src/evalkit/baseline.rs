use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex32;

use crate::chanlab::{CsiDataset, CsiMatrix, CsiPair};
use crate::error::{Error, Result};
use crate::nn::matmul;

/// Number of real coefficients kept for a pair at compression `sigma`:
/// `round(2 n_s n_t / sigma)`.
pub fn retained_rank(n_s: usize, n_t: usize, sigma: f64) -> Result<usize> {
    if !(sigma >= 1.0) {
        return Err(Error::Config(format!("compression ratio must be at least 1, got {sigma}")));
    }
    Ok(((2 * n_s * n_t) as f64 / sigma).round() as usize)
}

/// Truncated principal-component codec over the real vectorization of a
/// whole pair (both polarizations, real and imaginary parts).
#[derive(Debug, Clone)]
pub struct LinearCodec {
    n_s: usize,
    width: usize,
    mean: Vec<f64>,
    /// Orthonormal rows, strongest component first, `[rank, dim]`.
    basis: Vec<f64>,
    rank: usize,
    /// Eigenvalues of the training covariance in decreasing order.
    pub spectrum: Vec<f64>,
}

fn vectorize(pair: &CsiPair, out: &mut Vec<f64>) {
    out.clear();
    for m in [&pair.h_v, &pair.h_h] {
        for z in m.as_slice() {
            out.push(z.re.into());
            out.push(z.im.into());
        }
    }
}

impl LinearCodec {
    /// Fits mean and principal directions on `pairs`, keeping `rank` of them.
    pub fn fit(pairs: &[CsiPair], rank: usize) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| Error::Dimension("no training pairs".into()))?;
        let (n_s, width) = (first.n_s(), first.width());
        let dim = 4 * n_s * width;
        let n = pairs.len();
        let mut data = Vec::with_capacity(n * dim);
        let mut row = Vec::with_capacity(dim);
        for p in pairs {
            if p.n_s() != n_s || p.width() != width {
                return Err(Error::Dimension("pairs of different shapes".into()));
            }
            vectorize(p, &mut row);
            data.extend_from_slice(&row);
        }
        let mut mean = vec![0.0; dim];
        for r in data.chunks_exact(dim) {
            mean.iter_mut().zip(r).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for r in data.chunks_exact_mut(dim) {
            r.iter_mut().zip(&mean).for_each(|(v, &m)| *v -= m);
        }
        let mut cov = vec![0.0; dim * dim];
        matmul(dim, n, dim, &data, true, &data, false, 0.0, &mut cov);
        cov.iter_mut().for_each(|c| *c /= n as f64);

        let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &cov));
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let rank = rank.min(dim);
        let mut basis = Vec::with_capacity(rank * dim);
        for &k in &order[..rank] {
            basis.extend(eig.eigenvectors.column(k).iter().copied());
        }
        Ok(LinearCodec {
            n_s,
            width,
            mean,
            basis,
            rank,
            spectrum: order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same codec keeping only the leading `rank` components.
    pub fn truncated(&self, rank: usize) -> Self {
        let rank = rank.min(self.rank);
        LinearCodec {
            basis: self.basis[..rank * self.dim()].to_vec(),
            rank,
            ..self.clone()
        }
    }

    pub fn encode(&self, pair: &CsiPair) -> Result<Vec<f64>> {
        if pair.n_s() != self.n_s || pair.width() != self.width {
            return Err(Error::Dimension(format!(
                "pair is {}x{}, codec expects {}x{}",
                pair.n_s(),
                pair.width(),
                self.n_s,
                self.width
            )));
        }
        let mut x = Vec::with_capacity(self.dim());
        vectorize(pair, &mut x);
        x.iter_mut().zip(&self.mean).for_each(|(v, &m)| *v -= m);
        Ok(self
            .basis
            .chunks_exact(self.dim())
            .map(|b| b.iter().zip(&x).map(|(p, q)| p * q).sum())
            .collect())
    }

    pub fn decode(&self, coeffs: &[f64]) -> Result<CsiPair> {
        if coeffs.len() != self.rank {
            return Err(Error::Dimension(format!("{} coefficients for rank {}", coeffs.len(), self.rank)));
        }
        let mut x = self.mean.clone();
        for (b, &c) in self.basis.chunks_exact(self.dim()).zip(coeffs) {
            x.iter_mut().zip(b).for_each(|(v, &p)| *v += c * p);
        }
        let plane = self.n_s * self.width;
        let matrix = |part: &[f64]| {
            let data = part.chunks_exact(2).map(|c| Complex32::new(c[0] as f32, c[1] as f32)).collect();
            CsiMatrix::from_vec(self.n_s, self.width, data)
        };
        CsiPair::new(matrix(&x[..2 * plane])?, matrix(&x[2 * plane..])?)
    }

    pub fn roundtrip(&self, pair: &CsiPair) -> Result<CsiPair> {
        self.decode(&self.encode(pair)?)
    }
}

/// Codec fitted on a channel-unit dataset with the coefficient budget of
/// compression `sigma`.
pub fn linear_baseline(train: &CsiDataset, sigma: f64) -> Result<LinearCodec> {
    if train.scaler.is_some() {
        return Err(Error::Config("fit the linear baseline on channel-unit data".into()));
    }
    LinearCodec::fit(&train.samples, retained_rank(train.n_s, train.n_t, sigma)?)
}
