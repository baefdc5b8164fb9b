use crate::error::{Error, Result};
use crate::miest::{club_mi_estimate, club_mi_with_grad, club_nll_backward, club_nll_loss, mi_regularizer, EstimatorPair};
use crate::model::{BnMode, Network};
use crate::nn::{Maps, ParamSet, Real};

/// `(1/2B) sum_b (|rv_b - hv_b|^2 + |rh_b - hh_b|^2)` on normalized maps.
pub fn mse_loss<T: Real>(rv: &Maps<T>, rh: &Maps<T>, hv: &Maps<T>, hh: &Maps<T>) -> Result<f64> {
    for (a, b) in [(rv, hv), (rh, hh)] {
        if a.shape() != b.shape() {
            return Err(Error::shape("mse_loss", format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
    }
    if hv.n == 0 {
        return Err(Error::BatchTooSmall(0));
    }
    let sq = |a: &Maps<T>, b: &Maps<T>| -> f64 {
        a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y).as_f64().powi(2)).sum()
    };
    Ok((sq(rv, hv) + sq(rh, hh)) / (2.0 * hv.n as f64))
}

/// Components of the step-one objective on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub mse: f64,
    /// Estimated information between both polarizations and the shared map, nats.
    pub mi_shared: f64,
    /// Estimated information between the two polarizations, nats.
    pub mi_cross: f64,
    /// Squared gap `(mi_shared - mi_cross - target)^2`.
    pub mi_loss: f64,
    pub total: f64,
}

impl LossParts {
    fn new(mse: f64, mi_shared: f64, mi_cross: f64, lambda: f64, target: f64) -> Self {
        let (mi_loss, _) = mi_regularizer(mi_shared, mi_cross, target);
        LossParts {
            mse,
            mi_shared,
            mi_cross,
            mi_loss,
            total: mse + lambda * mi_loss,
        }
    }
}

/// Weights of the information term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiWeight {
    pub lambda: f64,
    /// Target distance in nats.
    pub target: f64,
}

/// Shared-estimator input: `[hv | hh]` flattened per sample.
fn flat_inputs<T: Real>(hv: &Maps<T>, hh: &Maps<T>) -> Result<Vec<T>> {
    Ok(Maps::concat_channels(hv, hh)?.data)
}

/// Step-one objective `mse + lambda * mi_loss` with batch-statistic
/// normalization and no running-statistic update.
pub fn total_loss<T: Real>(
    net: &Network,
    ests: &EstimatorPair,
    params: &ParamSet<T>,
    est_params: &ParamSet<T>,
    hv: &Maps<T>,
    hh: &Maps<T>,
    weight: MiWeight,
) -> Result<LossParts> {
    let mut mode = BnMode::Batch(None);
    let (enc, _) = net.encoder.forward(params, &mut mode, hv, hh)?;
    let (rv, rh, _) = net.decoder.forward(params, &mut mode, &enc.latent)?;
    let mse = mse_loss(&rv, &rh, hv, hh)?;
    let n = hv.n;
    let mi_shared = club_mi_estimate(&ests.shared, est_params, &flat_inputs(hv, hh)?, &enc.w.data, n)?;
    let mi_cross = club_mi_estimate(&ests.cross, est_params, &hv.data, &hh.data, n)?;
    Ok(LossParts::new(mse, mi_shared, mi_cross, weight.lambda, weight.target))
}

/// Step-one loss and its gradient w.r.t. the model parameters, accumulated
/// into `grads`. Running statistics are updated when `buffers` is given.
/// Estimators are held fixed; the information term reaches the encoder only
/// through the shared map.
#[allow(clippy::too_many_arguments)]
pub fn model_gradients<T: Real>(
    net: &Network,
    ests: &EstimatorPair,
    params: &ParamSet<T>,
    buffers: Option<&mut ParamSet<T>>,
    est_params: &ParamSet<T>,
    hv: &Maps<T>,
    hh: &Maps<T>,
    weight: MiWeight,
    grads: &mut ParamSet<T>,
) -> Result<LossParts> {
    let n = hv.n;
    let mut mode = BnMode::Batch(buffers);
    let (enc, enc_cache) = net.encoder.forward(params, &mut mode, hv, hh)?;
    let (rv, rh, dec_cache) = net.decoder.forward(params, &mut mode, &enc.latent)?;
    let (enc_cache, dec_cache) = match (enc_cache, dec_cache) {
        (Some(e), Some(d)) => (e, d),
        _ => unreachable!("batch mode always returns caches"),
    };
    let mse = mse_loss(&rv, &rh, hv, hh)?;

    let x_shared = flat_inputs(hv, hh)?;
    let (mi_shared, d_shared) = club_mi_with_grad(&ests.shared, est_params, &x_shared, &enc.w.data, n)?;
    let mi_cross = club_mi_estimate(&ests.cross, est_params, &hv.data, &hh.data, n)?;
    let parts = LossParts::new(mse, mi_shared, mi_cross, weight.lambda, weight.target);
    if !parts.total.is_finite() {
        return Ok(parts);
    }

    let scale = T::lit(1.0 / n as f64);
    let diff = |r: &Maps<T>, h: &Maps<T>| -> Maps<T> {
        let mut d = r.clone();
        d.data.iter_mut().zip(&h.data).for_each(|(a, &b)| *a = (*a - b) * scale);
        d
    };
    let dz = net.decoder.backward(params, &dec_cache, &diff(&rv, hv), &diff(&rh, hh), grads);

    let dw_extra = if weight.lambda != 0.0 {
        let (_, d_gap) = mi_regularizer(mi_shared, mi_cross, weight.target);
        let s = T::lit(weight.lambda * d_gap);
        let mut d = enc.w.zeros_like();
        d.data.iter_mut().zip(&d_shared).for_each(|(a, &g)| *a = g * s);
        Some(d)
    } else {
        None
    };
    net.encoder.backward(params, &enc, &enc_cache, &dz, dw_extra.as_ref(), grads);
    Ok(parts)
}

/// Step-two objective: the sum of both estimators' negative log-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorLoss {
    pub shared_nll: f64,
    pub cross_nll: f64,
}

impl EstimatorLoss {
    pub fn total(&self) -> f64 {
        self.shared_nll + self.cross_nll
    }
}

/// Shared map from a frozen model with batch statistics and no
/// running-statistic update.
pub fn frozen_shared_map<T: Real>(net: &Network, params: &ParamSet<T>, hv: &Maps<T>, hh: &Maps<T>) -> Result<Maps<T>> {
    net.encoder.shared_map(params, &mut BnMode::Batch(None), hv, hh)
}

pub fn estimator_loss<T: Real>(
    ests: &EstimatorPair,
    est_params: &ParamSet<T>,
    hv: &Maps<T>,
    hh: &Maps<T>,
    shared: &Maps<T>,
) -> Result<EstimatorLoss> {
    let n = hv.n;
    Ok(EstimatorLoss {
        shared_nll: club_nll_loss(&ests.shared, est_params, &flat_inputs(hv, hh)?, &shared.data, n)?,
        cross_nll: club_nll_loss(&ests.cross, est_params, &hv.data, &hh.data, n)?,
    })
}

/// Step-two loss with gradients w.r.t. the estimator parameters.
pub fn estimator_gradients<T: Real>(
    ests: &EstimatorPair,
    est_params: &ParamSet<T>,
    hv: &Maps<T>,
    hh: &Maps<T>,
    shared: &Maps<T>,
    grads: &mut ParamSet<T>,
) -> Result<EstimatorLoss> {
    let n = hv.n;
    Ok(EstimatorLoss {
        shared_nll: club_nll_backward(&ests.shared, est_params, &flat_inputs(hv, hh)?, &shared.data, n, grads)?,
        cross_nll: club_nll_backward(&ests.cross, est_params, &hv.data, &hh.data, n, grads)?,
    })
}
