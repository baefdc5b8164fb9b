use super::{leaky, leaky_grad, Conv2d, Maps, ParamId, ParamSet, Real};
use crate::error::Result;

pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the previous running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Convolution followed by per-channel batch normalization and a leaky
/// activation. Running statistics live in a separate buffer set.
#[derive(Debug, Clone)]
pub struct CompositeConv {
    pub conv: Conv2d,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

/// What a training-mode forward pass keeps for the backward pass. The
/// activation itself is recomputed on demand from the normalized values.
#[derive(Debug, Clone)]
pub struct CompositeCache<T> {
    xhat: Maps<T>,
    inv_std: Vec<T>,
}

impl<T: Real> CompositeCache<T> {
    pub fn normalized(&self) -> &Maps<T> {
        &self.xhat
    }
}

impl CompositeConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        buffers: &mut ParamSet<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
    ) -> Self {
        let conv = Conv2d::new(params, format!("{name}.conv"), c_in, c_out, kh, kw);
        let gamma = params.register(format!("{name}.bn.gamma"), &[c_out]);
        let beta = params.register(format!("{name}.bn.beta"), &[c_out]);
        let running_mean = buffers.register(format!("{name}.bn.running_mean"), &[c_out]);
        let running_var = buffers.register(format!("{name}.bn.running_var"), &[c_out]);
        CompositeConv {
            conv,
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }

    pub fn c_out(&self) -> usize {
        self.conv.c_out
    }

    pub fn name(&self) -> &str {
        self.conv.name.trim_end_matches(".conv")
    }

    /// Batch-statistics forward pass. Running statistics are updated when
    /// `buffers` is given.
    pub fn forward_train<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: Option<&mut ParamSet<T>>,
        x: &Maps<T>,
    ) -> Result<(Maps<T>, CompositeCache<T>)> {
        let mut z = self.conv.forward(params, x)?;
        let c = z.c;
        let hw = z.plane();
        let m = (z.n * hw) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for i in 0..z.n {
            let s = z.sample(i);
            for ch in 0..c {
                mean[ch] += s[ch * hw..(ch + 1) * hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for i in 0..z.n {
            let s = z.sample(i);
            for ch in 0..c {
                var[ch] += s[ch * hw..(ch + 1) * hw]
                    .iter()
                    .map(|v| (v.as_f64() - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m);

        if let Some(buf) = buffers {
            let mom = T::lit(BN_MOMENTUM);
            let upd = T::lit(1.0 - BN_MOMENTUM);
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for (r, &b) in buf.get_mut(self.running_mean).iter_mut().zip(&mean) {
                *r = mom * *r + upd * T::lit(b);
            }
            for (r, &b) in buf.get_mut(self.running_var).iter_mut().zip(&var) {
                *r = mom * *r + upd * T::lit(b * unbias);
            }
        }

        let inv_std: Vec<T> = var.iter().map(|&v| T::lit(1.0 / (v + BN_EPS).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&v| T::lit(v)).collect();
        for i in 0..z.n {
            let s = z.sample_mut(i);
            for ch in 0..c {
                let (mu, is) = (mean_t[ch], inv_std[ch]);
                s[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v = (*v - mu) * is);
            }
        }
        let cache = CompositeCache { xhat: z, inv_std };
        let out = self.activation(params, &cache);
        Ok((out, cache))
    }

    /// Recomputes the activation produced by a training-mode forward pass.
    pub fn activation<T: Real>(&self, params: &ParamSet<T>, cache: &CompositeCache<T>) -> Maps<T> {
        let gamma = params.get(self.gamma);
        let beta = params.get(self.beta);
        let mut out = cache.xhat.clone();
        let (hw, c) = (out.plane(), out.c);
        for i in 0..out.n {
            let s = out.sample_mut(i);
            for ch in 0..c {
                let (g, b) = (gamma[ch], beta[ch]);
                s[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v = leaky(g * *v + b));
            }
        }
        out
    }

    pub fn forward_eval<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: &ParamSet<T>,
        x: &Maps<T>,
    ) -> Result<Maps<T>> {
        let mut z = self.conv.forward(params, x)?;
        let gamma = params.get(self.gamma);
        let beta = params.get(self.beta);
        let rm = buffers.get(self.running_mean);
        let rv = buffers.get(self.running_var);
        let hw = z.plane();
        let c = z.c;
        let scale: Vec<T> = (0..c)
            .map(|ch| gamma[ch] / (rv[ch] + T::lit(BN_EPS)).sqrt())
            .collect();
        for i in 0..z.n {
            let s = z.sample_mut(i);
            for ch in 0..c {
                let (sc, mu, b) = (scale[ch], rm[ch], beta[ch]);
                s[ch * hw..(ch + 1) * hw]
                    .iter_mut()
                    .for_each(|v| *v = leaky((*v - mu) * sc + b));
            }
        }
        Ok(z)
    }

    /// Backward through activation, normalization and convolution. `x` is the
    /// input that was fed to [`CompositeConv::forward_train`].
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &Maps<T>,
        cache: &CompositeCache<T>,
        dout: &Maps<T>,
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Option<Maps<T>> {
        let xhat = &cache.xhat;
        let c = xhat.c;
        let hw = xhat.plane();
        let m = T::lit((xhat.n * hw) as f64);
        let gamma = params.get(self.gamma).to_vec();
        let beta = params.get(self.beta).to_vec();

        // dy: gradient after the affine step, before the activation.
        let mut dy = dout.clone();
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..xhat.n {
            let xs = xhat.sample(i);
            let ds = dy.sample_mut(i);
            for ch in 0..c {
                let r = ch * hw..(ch + 1) * hw;
                for (d, &xh) in ds[r.clone()].iter_mut().zip(&xs[r]) {
                    *d *= leaky_grad(gamma[ch] * xh + beta[ch]);
                    sum_dy[ch] += *d;
                    sum_dy_xhat[ch] += *d * xh;
                }
            }
        }
        for (g, &s) in grads.get_mut(self.gamma).iter_mut().zip(&sum_dy_xhat) {
            *g += s;
        }
        for (g, &s) in grads.get_mut(self.beta).iter_mut().zip(&sum_dy) {
            *g += s;
        }

        // dz = inv_std * gamma * (dy - mean(dy) - xhat * mean(dy * xhat))
        let mut dz = dy;
        for i in 0..xhat.n {
            let xs = xhat.sample(i);
            let ds = dz.sample_mut(i);
            for ch in 0..c {
                let k = gamma[ch] * cache.inv_std[ch];
                let mdy = sum_dy[ch] / m;
                let mdx = sum_dy_xhat[ch] / m;
                let r = ch * hw..(ch + 1) * hw;
                for (d, &xh) in ds[r.clone()].iter_mut().zip(&xs[r]) {
                    *d = k * (*d - mdy - xh * mdx);
                }
            }
        }
        self.conv.backward(params, x, &dz, grads, need_input_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (CompositeConv, ParamSet<f64>, ParamSet<f64>, Maps<f64>) {
        let mut p = ParamSet::<f64>::new();
        let mut b = ParamSet::<f64>::new();
        let cc = CompositeConv::new(&mut p, &mut b, "cc", 2, 3, 3, 1);
        for (i, v) in p.data_mut().iter_mut().enumerate() {
            *v = ((i * 5 + 1) as f64 * 0.319).sin();
        }
        let x = Maps::from_vec(3, 2, 3, 4, (0..72).map(|i| (i as f64 * 0.41).cos()).collect()).unwrap();
        (cc, p, b, x)
    }

    #[test]
    fn normalized_channels_have_zero_mean_unit_variance() {
        let (cc, p, _, x) = setup();
        let (_, cache) = cc.forward_train(&p, None, &x).unwrap();
        let xh = cache.normalized();
        let hw = xh.plane();
        for ch in 0..xh.c {
            let vals: Vec<f64> = (0..xh.n)
                .flat_map(|i| xh.sample(i)[ch * hw..(ch + 1) * hw].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let (cc, p, mut b, x) = setup();
        b.get_mut(cc.running_var).iter_mut().for_each(|v| *v = 1.0);
        cc.forward_train(&p, Some(&mut b), &x).unwrap();
        let z = cc.conv.forward(&p, &x).unwrap();
        let hw = z.plane();
        let vals: Vec<f64> = (0..z.n).flat_map(|i| z.sample(i)[..hw].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((b.get(cc.running_mean)[0] - 0.1 * mean).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_running_stats() {
        let (cc, p, mut b, x) = setup();
        b.get_mut(cc.running_var).iter_mut().for_each(|v| *v = 1.0 - BN_EPS);
        // mean 0, var 1: eval output equals leaky(gamma * conv + beta).
        let out = cc.forward_eval(&p, &b, &x).unwrap();
        let z = cc.conv.forward(&p, &x).unwrap();
        let g = p.get(cc.gamma)[1];
        let bt = p.get(cc.beta)[1];
        let hw = z.plane();
        let want = leaky(g * z.sample(2)[hw + 3] + bt);
        assert!((out.sample(2)[hw + 3] - want).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (cc, mut p, _, mut x) = setup();
        let (y, cache) = cc.forward_train(&p, None, &x).unwrap();
        let r: Vec<f64> = (0..y.data.len()).map(|i| (i as f64 * 1.31).sin()).collect();
        let dy = Maps::from_vec(y.n, y.c, y.h, y.w, r.clone()).unwrap();
        let mut g = p.zeros_like();
        let dx = cc.backward(&p, &x, &cache, &dy, &mut g, true).unwrap();
        let loss = |p: &ParamSet<f64>, x: &Maps<f64>| -> f64 {
            let (y, _) = cc.forward_train(p, None, x).unwrap();
            y.data.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for idx in 0..p.len() {
            let v = p.data()[idx];
            p.data_mut()[idx] = v + eps;
            let up = loss(&p, &x);
            p.data_mut()[idx] = v - eps;
            let dn = loss(&p, &x);
            p.data_mut()[idx] = v;
            let fd = (up - dn) / (2.0 * eps);
            assert!((fd - g.data()[idx]).abs() < 1e-5, "param {idx}: {fd} vs {}", g.data()[idx]);
        }
        for idx in (0..x.data.len()).step_by(7) {
            let v = x.data[idx];
            x.data[idx] = v + eps;
            let up = loss(&p, &x);
            x.data[idx] = v - eps;
            let dn = loss(&p, &x);
            x.data[idx] = v;
            let fd = (up - dn) / (2.0 * eps);
            assert!((fd - dx.data[idx]).abs() < 1e-5, "input {idx}");
        }
    }
}
