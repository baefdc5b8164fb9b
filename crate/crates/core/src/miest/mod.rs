//! Contrastive log-ratio upper-bound (CLUB) estimation of mutual information
//! with a diagonal-Gaussian variational conditional, and the regularizer that
//! ties the shared-map information to the cross-polarization information.

mod fit;

pub use fit::{fit_estimator, gaussian_pairs, EstimatorFit};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Linear, ParamSet, Real};

pub const DEFAULT_HIDDEN: usize = 128;
pub const LOGVAR_LIMIT: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Variational conditional `q(y | x) = N(mu(x), diag(exp(logvar(x))))`.
/// `x` is flattened and projected to `hidden` units, followed by one more
/// hidden layer and two linear heads.
#[derive(Debug, Clone)]
pub struct MiEstimator {
    pub name: String,
    pub d_x: usize,
    pub d_y: usize,
    pub hidden: usize,
    project: Linear,
    inner: Linear,
    mean: Linear,
    logvar: Linear,
}

/// Activations kept for the backward pass through the head.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
    /// Entries where the log-variance clamp was active.
    clamped: Vec<bool>,
    a1: Vec<T>,
    a2: Vec<T>,
}

fn relu<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| *x = x.max(T::zero()));
}

fn relu_backward<T: Real>(act: &[T], d: &mut [T]) {
    for (g, &a) in d.iter_mut().zip(act) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

fn check_batch<T>(x: &[T], y: &[T], d_x: usize, d_y: usize, n: usize, name: &str) -> Result<()> {
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if x.len() != n * d_x || y.len() != n * d_y {
        return Err(Error::shape(
            name,
            format!("x has {} values, y has {} for batch {n} of dims ({d_x}, {d_y})", x.len(), y.len()),
        ));
    }
    Ok(())
}

impl MiEstimator {
    pub fn new<T: Real>(params: &mut ParamSet<T>, name: &str, d_x: usize, d_y: usize, hidden: usize) -> Self {
        MiEstimator {
            name: name.to_string(),
            d_x,
            d_y,
            hidden,
            project: Linear::new(params, format!("{name}.project"), d_x, hidden),
            inner: Linear::new(params, format!("{name}.inner"), hidden, hidden),
            mean: Linear::new(params, format!("{name}.mean"), hidden, d_y),
            logvar: Linear::new(params, format!("{name}.logvar"), hidden, d_y),
        }
    }

    /// Fan-in scaled uniform weights and zero biases.
    pub fn init<R: Rng>(&self, params: &mut ParamSet<f32>, rng: &mut R) {
        for layer in [&self.project, &self.inner, &self.mean, &self.logvar] {
            let bound = 1.0 / (layer.d_in as f64).sqrt();
            params
                .get_mut(layer.weight)
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound) as f32);
            params.get_mut(layer.bias).iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn head<T: Real>(&self, params: &ParamSet<T>, x: &[T], n: usize) -> Result<HeadOutput<T>> {
        let mut a1 = self.project.forward(params, x, n)?;
        relu(&mut a1);
        let mut a2 = self.inner.forward(params, &a1, n)?;
        relu(&mut a2);
        let mu = self.mean.forward(params, &a2, n)?;
        let raw = self.logvar.forward(params, &a2, n)?;
        let lim = T::lit(LOGVAR_LIMIT);
        let clamped: Vec<bool> = raw.iter().map(|&v| v < -lim || v > lim).collect();
        let logvar: Vec<T> = raw.iter().map(|&v| v.max(-lim).min(lim)).collect();
        if !mu.iter().chain(&logvar).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { layer: self.name.clone() });
        }
        Ok(HeadOutput {
            mu,
            logvar,
            clamped,
            a1,
            a2,
        })
    }

    /// Backpropagates gradients w.r.t. the head outputs into parameter
    /// gradients.
    fn head_backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        out: &HeadOutput<T>,
        mut d_mu: Vec<T>,
        mut d_logvar: Vec<T>,
        n: usize,
        grads: &mut ParamSet<T>,
    ) {
        for (g, &c) in d_logvar.iter_mut().zip(&out.clamped) {
            if c {
                *g = T::zero();
            }
        }
        let mut d_a2 = self
            .mean
            .backward(params, &out.a2, &d_mu, n, grads, true)
            .expect("input gradient requested");
        let d_lv = self
            .logvar
            .backward(params, &out.a2, &d_logvar, n, grads, true)
            .expect("input gradient requested");
        for (a, b) in d_a2.iter_mut().zip(d_lv) {
            *a += b;
        }
        relu_backward(&out.a2, &mut d_a2);
        let mut d_a1 = self
            .inner
            .backward(params, &out.a1, &d_a2, n, grads, true)
            .expect("input gradient requested");
        relu_backward(&out.a1, &mut d_a1);
        self.project.backward(params, x, &d_a1, n, grads, false);
        d_mu.clear();
        d_logvar.clear();
    }

    /// Mean log-density `(1/N) sum_i ln q(y_i | x_i)`.
    pub fn log_likelihood<T: Real>(&self, params: &ParamSet<T>, x: &[T], y: &[T], n: usize) -> Result<f64> {
        check_batch(x, y, self.d_x, self.d_y, n, &self.name)?;
        let out = self.head(params, x, n)?;
        Ok(-nll_terms(&out, y) / n as f64)
    }
}

fn nll_terms<T: Real>(out: &HeadOutput<T>, y: &[T]) -> f64 {
    out.mu
        .iter()
        .zip(&out.logvar)
        .zip(y)
        .map(|((&m, &lv), &yv)| {
            let (m, lv, yv) = (m.as_f64(), lv.as_f64(), yv.as_f64());
            0.5 * (yv - m).powi(2) * (-lv).exp() + 0.5 * lv + HALF_LN_2PI
        })
        .sum()
}

/// Sampled CLUB estimate in nats using all in-batch pairs as negatives,
/// evaluated in `O(N d)`.
pub fn club_mi_estimate<T: Real>(est: &MiEstimator, params: &ParamSet<T>, x: &[T], y: &[T], n: usize) -> Result<f64> {
    check_batch(x, y, est.d_x, est.d_y, n, &est.name)?;
    let out = est.head(params, x, n)?;
    Ok(club_from_head(&out, y, n, est.d_y).0)
}

/// CLUB value and its gradient w.r.t. `y`, with the estimator held fixed.
pub fn club_mi_with_grad<T: Real>(
    est: &MiEstimator,
    params: &ParamSet<T>,
    x: &[T],
    y: &[T],
    n: usize,
) -> Result<(f64, Vec<T>)> {
    check_batch(x, y, est.d_x, est.d_y, n, &est.name)?;
    let out = est.head(params, x, n)?;
    Ok(club_from_head(&out, y, n, est.d_y))
}

fn club_from_head<T: Real>(out: &HeadOutput<T>, y: &[T], n: usize, d: usize) -> (f64, Vec<T>) {
    let nf = n as f64;
    let mut ybar = vec![0.0f64; d];
    let mut y2bar = vec![0.0f64; d];
    for row in y.chunks_exact(d) {
        for ((s, s2), &v) in ybar.iter_mut().zip(y2bar.iter_mut()).zip(row) {
            let v = v.as_f64();
            *s += v;
            *s2 += v * v;
        }
    }
    ybar.iter_mut().for_each(|v| *v /= nf);
    y2bar.iter_mut().for_each(|v| *v /= nf);

    // With a_id = exp(-logvar_id)/2:
    //   I = (1/N) sum_i sum_d a_id [E_j (y_jd - mu_id)^2 - (y_id - mu_id)^2]
    let mut total = 0.0;
    let mut sum_a = vec![0.0f64; d];
    let mut sum_a_mu = vec![0.0f64; d];
    let mut grad = vec![T::zero(); n * d];
    for i in 0..n {
        for k in 0..d {
            let idx = i * d + k;
            let a = 0.5 * (-out.logvar[idx].as_f64()).exp();
            let mu = out.mu[idx].as_f64();
            let yv = y[idx].as_f64();
            let neg = y2bar[k] - 2.0 * mu * ybar[k] + mu * mu;
            total += a * (neg - (yv - mu).powi(2));
            sum_a[k] += a;
            sum_a_mu[k] += a * mu;
            grad[idx] = T::lit(-2.0 * a * (yv - mu) / nf);
        }
    }
    for i in 0..n {
        for k in 0..d {
            let idx = i * d + k;
            let yv = y[idx].as_f64();
            grad[idx] += T::lit(2.0 * (yv * sum_a[k] - sum_a_mu[k]) / (nf * nf));
        }
    }
    (total / nf, grad)
}

/// Negative mean log-likelihood `-(1/N) sum_i ln q(y_i | x_i)`, including
/// the Gaussian normalizing constants.
pub fn club_nll_loss<T: Real>(est: &MiEstimator, params: &ParamSet<T>, x: &[T], y: &[T], n: usize) -> Result<f64> {
    Ok(-est.log_likelihood(params, x, y, n)?)
}

/// Negative mean log-likelihood with parameter gradients accumulated into
/// `grads`.
pub fn club_nll_backward<T: Real>(
    est: &MiEstimator,
    params: &ParamSet<T>,
    x: &[T],
    y: &[T],
    n: usize,
    grads: &mut ParamSet<T>,
) -> Result<f64> {
    check_batch(x, y, est.d_x, est.d_y, n, &est.name)?;
    let out = est.head(params, x, n)?;
    let loss = nll_terms(&out, y) / n as f64;
    let inv_n = T::lit(1.0 / n as f64);
    let half = T::lit(0.5);
    let mut d_mu = vec![T::zero(); out.mu.len()];
    let mut d_lv = vec![T::zero(); out.mu.len()];
    for (idx, (dm, dl)) in d_mu.iter_mut().zip(d_lv.iter_mut()).enumerate() {
        let prec = (-out.logvar[idx]).exp();
        let r = y[idx] - out.mu[idx];
        *dm = -r * prec * inv_n;
        *dl = half * (T::one() - r * r * prec) * inv_n;
    }
    est.head_backward(params, x, &out, d_mu, d_lv, n, grads);
    Ok(loss)
}

/// Closed-form mutual information of jointly Gaussian vectors with
/// independent coordinates of correlation `rho`.
pub fn gaussian_mi_oracle(rho: f64, dim: usize) -> f64 {
    -(dim as f64) / 2.0 * (1.0 - rho * rho).ln()
}

/// Squared distance between the shared-map information and the
/// cross-polarization information, offset by `target` (all in nats).
/// Returns the value and its derivative w.r.t. `shared_mi`.
pub fn mi_regularizer(shared_mi: f64, cross_mi: f64, target: f64) -> (f64, f64) {
    let gap = shared_mi - cross_mi - target;
    (gap * gap, 2.0 * gap)
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// The two estimators used during training: `shared` models the shared map
/// given both polarizations, `cross` models one polarization given the other.
#[derive(Debug, Clone)]
pub struct EstimatorPair {
    pub shared: MiEstimator,
    pub cross: MiEstimator,
    layout: ParamSet<f32>,
}

impl EstimatorPair {
    /// Builds estimators for a grid of `n_s x n_t` (both maps are
    /// `n_s * n_t` long; the shared estimator's input is twice that).
    pub fn new(n_s: usize, n_t: usize, hidden: usize) -> Self {
        let mut layout = ParamSet::new();
        let l = n_s * n_t;
        let shared = MiEstimator::new(&mut layout, "mi1", 2 * l, l, hidden);
        let cross = MiEstimator::new(&mut layout, "mi2", l, l, hidden);
        EstimatorPair { shared, cross, layout }
    }

    pub fn hidden(&self) -> usize {
        self.shared.hidden
    }

    pub fn param_layout<T: Real>(&self) -> ParamSet<T> {
        self.layout.cast()
    }

    pub fn init<R: Rng>(&self, rng: &mut R) -> ParamSet<f32> {
        let mut p = self.layout.clone();
        self.shared.init(&mut p, rng);
        self.cross.init(&mut p, rng);
        p
    }
}
