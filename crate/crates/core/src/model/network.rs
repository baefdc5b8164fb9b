use num_complex::Complex32;
use rand::Rng;

use super::block::{AttentionBlock, BlockCache, BlockKind, BnMode};
use super::store::ParameterStore;
use super::ModelConfig;
use crate::chanlab::{CsiMatrix, CsiPair};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Conv2d, Linear, Maps, ParamSet, Real};
use crate::rng::{stream_rng, Stream};

/// Compressed representation of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTriple<T> {
    pub z_w: Vec<T>,
    pub z_v: Vec<T>,
    pub z_h: Vec<T>,
}

/// Latent triples of a batch, each stream stored `[n, m]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<T> {
    pub n: usize,
    pub m: usize,
    pub z_w: Vec<T>,
    pub z_v: Vec<T>,
    pub z_h: Vec<T>,
}

impl<T: Real> LatentBatch<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        LatentBatch {
            n,
            m,
            z_w: vec![T::zero(); n * m],
            z_v: vec![T::zero(); n * m],
            z_h: vec![T::zero(); n * m],
        }
    }

    pub fn triple(&self, i: usize) -> LatentTriple<T> {
        let r = i * self.m..(i + 1) * self.m;
        LatentTriple {
            z_w: self.z_w[r.clone()].to_vec(),
            z_v: self.z_v[r.clone()].to_vec(),
            z_h: self.z_h[r].to_vec(),
        }
    }

    pub fn from_triples(triples: &[LatentTriple<T>]) -> Result<Self> {
        let m = triples.first().map_or(0, |t| t.z_w.len());
        let mut out = LatentBatch {
            n: triples.len(),
            m,
            z_w: Vec::with_capacity(triples.len() * m),
            z_v: Vec::with_capacity(triples.len() * m),
            z_h: Vec::with_capacity(triples.len() * m),
        };
        for t in triples {
            if t.z_w.len() != m || t.z_v.len() != m || t.z_h.len() != m {
                return Err(Error::shape("latent", "streams of unequal length"));
            }
            out.z_w.extend_from_slice(&t.z_w);
            out.z_v.extend_from_slice(&t.z_v);
            out.z_h.extend_from_slice(&t.z_h);
        }
        Ok(out)
    }

    pub fn streams(&self) -> [&[T]; 3] {
        [&self.z_w, &self.z_v, &self.z_h]
    }

    pub fn streams_mut(&mut self) -> [&mut Vec<T>; 3] {
        [&mut self.z_w, &mut self.z_v, &mut self.z_h]
    }
}

/// Packs pairs into `[n, 2, n_s, n_t/2]` maps (real part, imaginary part).
pub fn pairs_to_maps<T: Real>(pairs: &[&CsiPair]) -> Result<(Maps<T>, Maps<T>)> {
    let first = pairs.first().ok_or_else(|| Error::Dimension("empty batch".into()))?;
    let (h, w) = (first.n_s(), first.width());
    let mut hv = Maps::zeros(pairs.len(), 2, h, w);
    let mut hh = Maps::zeros(pairs.len(), 2, h, w);
    let plane = h * w;
    for (i, p) in pairs.iter().enumerate() {
        if p.n_s() != h || p.width() != w {
            return Err(Error::Dimension(format!(
                "sample {i} is {}x{}, batch is {h}x{w}",
                p.n_s(),
                p.width()
            )));
        }
        for (mat, maps) in [(&p.h_v, &mut hv), (&p.h_h, &mut hh)] {
            let dst = maps.sample_mut(i);
            for (j, c) in mat.as_slice().iter().enumerate() {
                dst[j] = T::lit(c.re as f64);
                dst[plane + j] = T::lit(c.im as f64);
            }
        }
    }
    Ok((hv, hh))
}

pub fn maps_to_pairs<T: Real>(hv: &Maps<T>, hh: &Maps<T>) -> Result<Vec<CsiPair>> {
    if hv.shape() != hh.shape() || hv.c != 2 {
        return Err(Error::shape("maps_to_pairs", format!("{:?} vs {:?}", hv.shape(), hh.shape())));
    }
    let plane = hv.plane();
    let to_matrix = |m: &Maps<T>, i: usize| {
        let s = m.sample(i);
        let data = (0..plane)
            .map(|j| Complex32::new(s[j].as_f64() as f32, s[plane + j].as_f64() as f32))
            .collect();
        CsiMatrix::from_vec(m.h, m.w, data)
    };
    (0..hv.n)
        .map(|i| CsiPair::new(to_matrix(hv, i)?, to_matrix(hh, i)?))
        .collect()
}

fn flat_to_maps<T: Real>(data: Vec<T>, n: usize, h: usize, w: usize) -> Maps<T> {
    Maps::from_vec(n, 2, h, w, data).expect("flat length matches map shape")
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub shared: AttentionBlock,
    pub specific_v: AttentionBlock,
    pub specific_h: AttentionBlock,
    pub fc_w: Linear,
    pub fc_v: Linear,
    pub fc_h: Linear,
}

/// Encoder intermediates: the shared map `w`, the specific maps and the
/// latent triple.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    pub w: Maps<T>,
    pub u_v: Maps<T>,
    pub u_h: Maps<T>,
    pub latent: LatentBatch<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    x_shared: Maps<T>,
    shared: BlockCache<T>,
    x_v: Maps<T>,
    specific_v: BlockCache<T>,
    x_h: Maps<T>,
    specific_h: BlockCache<T>,
}

impl Encoder {
    fn new<T: Real>(cfg: &ModelConfig, params: &mut ParamSet<T>, buffers: &mut ParamSet<T>) -> Self {
        let block = |params: &mut ParamSet<T>, buffers: &mut ParamSet<T>, name: &str| {
            AttentionBlock::new(
                params,
                buffers,
                name,
                BlockKind::Extract,
                4,
                cfg.channels,
                &cfg.branch_kernels,
                cfg.identity_branch,
            )
        };
        let shared = block(params, buffers, "enc.sa");
        let specific_v = block(params, buffers, "enc.sp_v");
        let specific_h = block(params, buffers, "enc.sp_h");
        let (l, m) = (cfg.map_len(), cfg.latent_len);
        Encoder {
            shared,
            specific_v,
            specific_h,
            fc_w: Linear::new(params, "enc.fc_w", l, m),
            fc_v: Linear::new(params, "enc.fc_v", l, m),
            fc_h: Linear::new(params, "enc.fc_h", l, m),
        }
    }

    /// Shared map only; used when the specific branches are not needed.
    pub fn shared_map<T: Real>(
        &self,
        params: &ParamSet<T>,
        mode: &mut BnMode<'_, T>,
        hv: &Maps<T>,
        hh: &Maps<T>,
    ) -> Result<Maps<T>> {
        let x = Maps::concat_channels(hv, hh)?;
        Ok(self.shared.forward(params, mode, &x)?.0)
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        mode: &mut BnMode<'_, T>,
        hv: &Maps<T>,
        hh: &Maps<T>,
    ) -> Result<(EncoderOutput<T>, Option<EncoderCache<T>>)> {
        if hv.shape() != hh.shape() || hv.c != 2 {
            return Err(Error::shape(
                "enc.input",
                format!("{:?} vs {:?}", hv.shape(), hh.shape()),
            ));
        }
        let n = hv.n;
        let x_shared = Maps::concat_channels(hv, hh)?;
        let (w, c_shared) = self.shared.forward(params, &mut mode.reborrow(), &x_shared)?;
        let x_v = Maps::concat_channels(hv, &w)?;
        let (u_v, c_v) = self.specific_v.forward(params, &mut mode.reborrow(), &x_v)?;
        let x_h = Maps::concat_channels(hh, &w)?;
        let (u_h, c_h) = self.specific_h.forward(params, &mut mode.reborrow(), &x_h)?;
        let z_w = self.fc_w.forward(params, &w.data, n)?;
        let z_v = self.fc_v.forward(params, &u_v.data, n)?;
        let z_h = self.fc_h.forward(params, &u_h.data, n)?;
        let latent = LatentBatch {
            n,
            m: self.fc_w.d_out,
            z_w,
            z_v,
            z_h,
        };
        for (name, z) in [("enc.fc_w", &latent.z_w), ("enc.fc_v", &latent.z_v), ("enc.fc_h", &latent.z_h)] {
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { layer: name.into() });
            }
        }
        let cache = match (c_shared, c_v, c_h) {
            (Some(shared), Some(specific_v), Some(specific_h)) => Some(EncoderCache {
                x_shared,
                shared,
                x_v,
                specific_v,
                x_h,
                specific_h,
            }),
            _ => None,
        };
        Ok((EncoderOutput { w, u_v, u_h, latent }, cache))
    }

    /// Accumulates parameter gradients given the latent gradients and an
    /// optional extra gradient arriving directly at the shared map.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        out: &EncoderOutput<T>,
        cache: &EncoderCache<T>,
        dz: &LatentBatch<T>,
        dw_extra: Option<&Maps<T>>,
        grads: &mut ParamSet<T>,
    ) {
        let n = out.latent.n;
        let (h, w) = (out.w.h, out.w.w);
        let dw_flat = self
            .fc_w
            .backward(params, &out.w.data, &dz.z_w, n, grads, true)
            .expect("input gradient requested");
        let mut dw = flat_to_maps(dw_flat, n, h, w);
        if let Some(extra) = dw_extra {
            dw.add_assign(extra);
        }
        for (fc, block, u, x, c, dzs) in [
            (&self.fc_v, &self.specific_v, &out.u_v, &cache.x_v, &cache.specific_v, &dz.z_v),
            (&self.fc_h, &self.specific_h, &out.u_h, &cache.x_h, &cache.specific_h, &dz.z_h),
        ] {
            let du = fc.backward(params, &u.data, dzs, n, grads, true).expect("input gradient requested");
            let du = flat_to_maps(du, n, h, w);
            let dx = block.backward(params, x, c, &du, grads, true).expect("input gradient requested");
            let (_, dw_part) = dx.split_channels(2);
            dw.add_assign(&dw_part);
        }
        self.shared.backward(params, &cache.x_shared, &cache.shared, &dw, grads, false);
    }
}

/// One polarization's decoder: FC expansion, `width` parallel paths of
/// `depth` recovery blocks, summed and mapped through a pointwise sigmoid head.
#[derive(Debug, Clone)]
pub struct PolDecoder {
    pub fc: Linear,
    pub paths: Vec<Vec<AttentionBlock>>,
    pub head: Conv2d,
    n_s: usize,
    pol_width: usize,
}

#[derive(Debug, Clone)]
pub struct PolDecoderCache<T> {
    z_in: Vec<T>,
    expanded: Maps<T>,
    inputs: Vec<Vec<Maps<T>>>,
    caches: Vec<Vec<BlockCache<T>>>,
    sum: Maps<T>,
    out: Maps<T>,
}

impl PolDecoder {
    fn new<T: Real>(cfg: &ModelConfig, params: &mut ParamSet<T>, buffers: &mut ParamSet<T>, name: &str) -> Self {
        let fc = Linear::new(params, format!("{name}.fc"), 2 * cfg.latent_len, cfg.map_len());
        let paths = (0..cfg.width)
            .map(|p| {
                (0..cfg.depth)
                    .map(|d| {
                        AttentionBlock::new(
                            params,
                            buffers,
                            &format!("{name}.path{p}.block{d}"),
                            BlockKind::Recover,
                            2,
                            cfg.channels,
                            &cfg.branch_kernels,
                            cfg.identity_branch,
                        )
                    })
                    .collect()
            })
            .collect();
        let head = Conv2d::new(params, format!("{name}.head"), 2, 2, 1, 1);
        PolDecoder {
            fc,
            paths,
            head,
            n_s: cfg.n_s,
            pol_width: cfg.pol_width(),
        }
    }

    fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        mode: &mut BnMode<'_, T>,
        z_pol: &[T],
        z_w: &[T],
        n: usize,
        m: usize,
    ) -> Result<(Maps<T>, Option<PolDecoderCache<T>>)> {
        if z_pol.len() != n * m || z_w.len() != n * m || 2 * m != self.fc.d_in {
            return Err(Error::shape(&self.fc.name, format!("latent length {m}, expected {}", self.fc.d_in / 2)));
        }
        let mut z_in = Vec::with_capacity(2 * n * m);
        for i in 0..n {
            z_in.extend_from_slice(&z_pol[i * m..(i + 1) * m]);
            z_in.extend_from_slice(&z_w[i * m..(i + 1) * m]);
        }
        let expanded = flat_to_maps(self.fc.forward(params, &z_in, n)?, n, self.n_s, self.pol_width);
        expanded.check_finite(&self.fc.name)?;
        let keep = mode.is_batch();
        let mut sum = expanded.zeros_like();
        let mut inputs = Vec::new();
        let mut caches = Vec::new();
        for path in &self.paths {
            let mut x = expanded.clone();
            let mut path_inputs = Vec::new();
            let mut path_caches = Vec::new();
            for block in path {
                let (y, c) = block.forward(params, &mut mode.reborrow(), &x)?;
                if keep {
                    path_inputs.push(std::mem::replace(&mut x, y));
                    path_caches.push(c.expect("batch mode yields caches"));
                } else {
                    x = y;
                }
            }
            sum.add_assign(&x);
            inputs.push(path_inputs);
            caches.push(path_caches);
        }
        let mut out = self.head.forward(params, &sum)?;
        out.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        out.check_finite(&self.head.name)?;
        let cache = keep.then(|| PolDecoderCache {
            z_in,
            expanded,
            inputs,
            caches,
            sum,
            out: out.clone(),
        });
        Ok((out, cache))
    }

    /// Returns the gradient w.r.t. the FC input `(z_pol, z_w)` per sample.
    fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &PolDecoderCache<T>,
        dout: &Maps<T>,
        grads: &mut ParamSet<T>,
    ) -> Vec<T> {
        let mut dpre = dout.clone();
        for (d, &y) in dpre.data.iter_mut().zip(&cache.out.data) {
            *d *= y * (T::one() - y);
        }
        let dsum = self
            .head
            .backward(params, &cache.sum, &dpre, grads, true)
            .expect("input gradient requested");
        let mut dexp = cache.expanded.zeros_like();
        for ((path, inputs), caches) in self.paths.iter().zip(&cache.inputs).zip(&cache.caches) {
            let mut d = dsum.clone();
            for ((block, x), c) in path.iter().zip(inputs).zip(caches).rev() {
                d = block.backward(params, x, c, &d, grads, true).expect("input gradient requested");
            }
            dexp.add_assign(&d);
        }
        let n = dout.n;
        self.fc
            .backward(params, &cache.z_in, &dexp.data, n, grads, true)
            .expect("input gradient requested")
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub v: PolDecoder,
    pub h: PolDecoder,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    v: PolDecoderCache<T>,
    h: PolDecoderCache<T>,
}

impl Decoder {
    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        mode: &mut BnMode<'_, T>,
        latent: &LatentBatch<T>,
    ) -> Result<(Maps<T>, Maps<T>, Option<DecoderCache<T>>)> {
        let (n, m) = (latent.n, latent.m);
        let (hv, cv) = self.v.forward(params, &mut mode.reborrow(), &latent.z_v, &latent.z_w, n, m)?;
        let (hh, ch) = self.h.forward(params, &mut mode.reborrow(), &latent.z_h, &latent.z_w, n, m)?;
        let cache = match (cv, ch) {
            (Some(v), Some(h)) => Some(DecoderCache { v, h }),
            _ => None,
        };
        Ok((hv, hh, cache))
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &DecoderCache<T>,
        dhv: &Maps<T>,
        dhh: &Maps<T>,
        grads: &mut ParamSet<T>,
    ) -> LatentBatch<T> {
        let n = dhv.n;
        let m = self.v.fc.d_in / 2;
        let mut dz = LatentBatch::zeros(n, m);
        let gv = self.v.backward(params, &cache.v, dhv, grads);
        let gh = self.h.backward(params, &cache.h, dhh, grads);
        for i in 0..n {
            let (a, b) = (&gv[2 * m * i..2 * m * (i + 1)], &gh[2 * m * i..2 * m * (i + 1)]);
            let r = i * m..(i + 1) * m;
            dz.z_v[r.clone()].copy_from_slice(&a[..m]);
            dz.z_h[r.clone()].copy_from_slice(&b[..m]);
            for ((t, &x), &y) in dz.z_w[r].iter_mut().zip(&a[m..]).zip(&b[m..]) {
                *t = x + y;
            }
        }
        dz
    }
}

/// Layer graph for one [`ModelConfig`]. Holds tensor handles only; values
/// live in parameter sets built from [`Network::param_layout`].
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    params: ParamSet<f32>,
    buffers: ParamSet<f32>,
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let encoder = Encoder::new(&config, &mut params, &mut buffers);
        let decoder = Decoder {
            v: PolDecoder::new(&config, &mut params, &mut buffers, "dec.v"),
            h: PolDecoder::new(&config, &mut params, &mut buffers, "dec.h"),
        };
        for id in buffers.ids().collect::<Vec<_>>() {
            if buffers.spec(id).name.ends_with("running_var") {
                buffers.get_mut(id).iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Ok(Network {
            config,
            encoder,
            decoder,
            params,
            buffers,
        })
    }

    /// Zero-filled learnable parameter set with this network's layout.
    pub fn param_layout<T: Real>(&self) -> ParamSet<T> {
        self.params.cast()
    }

    /// Normalization buffers at their initial values (mean 0, variance 1).
    pub fn buffer_layout<T: Real>(&self) -> ParamSet<T> {
        self.buffers.cast()
    }

    /// Fan-in scaled uniform weights, zero biases, unit normalization scale.
    pub fn init_params(&self, seed: u64) -> ParameterStore {
        let mut params = self.params.clone();
        let mut rng = stream_rng(seed, Stream::Init);
        for id in params.ids().collect::<Vec<_>>() {
            let spec = params.spec(id).clone();
            let values = params.get_mut(id);
            if spec.name.ends_with(".weight") {
                let fan_in: usize = spec.shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                values
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound) as f32);
            } else if spec.name.ends_with(".gamma") {
                values.iter_mut().for_each(|v| *v = 1.0);
            }
        }
        ParameterStore::new(self.config.clone(), params, self.buffers.clone(), seed)
    }

    pub fn check_layout<T: Real>(&self, params: &ParamSet<T>, buffers: Option<&ParamSet<T>>) -> Result<()> {
        if !params.same_layout(&self.params) || buffers.is_some_and(|b| !b.same_layout(&self.buffers)) {
            return Err(Error::Inconsistent(format!(
                "parameter layout does not match model {}",
                self.config
            )));
        }
        Ok(())
    }

    /// Evaluation-mode reconstruction, processed in chunks of `chunk` samples.
    pub fn reconstruct<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: &ParamSet<T>,
        hv: &Maps<T>,
        hh: &Maps<T>,
        chunk: usize,
    ) -> Result<(Maps<T>, Maps<T>)> {
        let mut out_v = hv.zeros_like();
        let mut out_h = hh.zeros_like();
        let l = hv.sample_len();
        let chunk = chunk.max(1);
        for start in (0..hv.n).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(hv.n)).collect();
            let (bv, bh) = (hv.gather(&idx), hh.gather(&idx));
            let mut mode = BnMode::Running(buffers);
            let (enc, _) = self.encoder.forward(params, &mut mode, &bv, &bh)?;
            let (rv, rh, _) = self.decoder.forward(params, &mut mode, &enc.latent)?;
            out_v.data[start * l..start * l + rv.data.len()].copy_from_slice(&rv.data);
            out_h.data[start * l..start * l + rh.data.len()].copy_from_slice(&rh.data);
        }
        Ok((out_v, out_h))
    }

    /// Evaluation-mode shared map.
    pub fn encode_shared<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: &ParamSet<T>,
        hv: &Maps<T>,
        hh: &Maps<T>,
    ) -> Result<Maps<T>> {
        self.encoder.shared_map(params, &mut BnMode::Running(buffers), hv, hh)
    }

    /// Evaluation-mode encoding in chunks.
    pub fn encode<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: &ParamSet<T>,
        hv: &Maps<T>,
        hh: &Maps<T>,
        chunk: usize,
    ) -> Result<LatentBatch<T>> {
        let m = self.config.latent_len;
        let mut out = LatentBatch::zeros(hv.n, m);
        let chunk = chunk.max(1);
        for start in (0..hv.n).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(hv.n)).collect();
            let (enc, _) =
                self.encoder
                    .forward(params, &mut BnMode::Running(buffers), &hv.gather(&idx), &hh.gather(&idx))?;
            let r = start * m..(start + idx.len()) * m;
            out.z_w[r.clone()].copy_from_slice(&enc.latent.z_w);
            out.z_v[r.clone()].copy_from_slice(&enc.latent.z_v);
            out.z_h[r].copy_from_slice(&enc.latent.z_h);
        }
        Ok(out)
    }

    /// Evaluation-mode decoding in chunks.
    pub fn decode<T: Real>(
        &self,
        params: &ParamSet<T>,
        buffers: &ParamSet<T>,
        latent: &LatentBatch<T>,
        chunk: usize,
    ) -> Result<(Maps<T>, Maps<T>)> {
        let (h, w) = (self.config.n_s, self.config.pol_width());
        let mut out_v = Maps::zeros(latent.n, 2, h, w);
        let mut out_h = Maps::zeros(latent.n, 2, h, w);
        let l = out_v.sample_len();
        let m = latent.m;
        let chunk = chunk.max(1);
        for start in (0..latent.n).step_by(chunk) {
            let end = (start + chunk).min(latent.n);
            let r = start * m..end * m;
            let part = LatentBatch {
                n: end - start,
                m,
                z_w: latent.z_w[r.clone()].to_vec(),
                z_v: latent.z_v[r.clone()].to_vec(),
                z_h: latent.z_h[r].to_vec(),
            };
            let (rv, rh, _) = self.decoder.forward(params, &mut BnMode::Running(buffers), &part)?;
            out_v.data[start * l..end * l].copy_from_slice(&rv.data);
            out_h.data[start * l..end * l].copy_from_slice(&rh.data);
        }
        Ok((out_v, out_h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Network {
        let cfg = ModelConfig::new(8, 8, 4.0).unwrap().with_trunk(3, 1, 2).unwrap();
        Network::new(cfg).unwrap()
    }

    fn inputs(n: usize, seed: u64) -> (Maps<f64>, Maps<f64>) {
        let mut rng = stream_rng(seed, Stream::Evaluation);
        let mut mk = || {
            Maps::from_vec(n, 2, 8, 4, (0..n * 64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
        };
        (mk(), mk())
    }

    #[test]
    fn shapes_follow_the_config() {
        let net = tiny();
        let store = net.init_params(1);
        let p = store.params.cast::<f64>();
        let b = store.buffers.cast::<f64>();
        let (hv, hh) = inputs(3, 2);
        let (enc, _) = net.encoder.forward(&p, &mut BnMode::Running(&b), &hv, &hh).unwrap();
        assert_eq!(net.encoder.fc_w.d_in, 64);
        assert_eq!(enc.latent.m, net.config.latent_len);
        assert_eq!(enc.w.shape(), [3, 2, 8, 4]);
        assert_eq!(net.decoder.v.fc.d_in, 2 * net.config.latent_len);
        let (rv, rh, _) = net.decoder.forward(&p, &mut BnMode::Running(&b), &enc.latent).unwrap();
        assert_eq!(rv.shape(), hv.shape());
        assert_eq!(rh.shape(), hh.shape());
        assert!(rv.data.iter().chain(&rh.data).all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn swapping_polarizations_changes_the_shared_latent() {
        let net = tiny();
        let store = net.init_params(3);
        let p = store.params.cast::<f64>();
        let b = store.buffers.cast::<f64>();
        let (hv, hh) = inputs(2, 4);
        let (a, _) = net.encoder.forward(&p, &mut BnMode::Running(&b), &hv, &hh).unwrap();
        let (c, _) = net.encoder.forward(&p, &mut BnMode::Running(&b), &hh, &hv).unwrap();
        assert_ne!(a.latent.z_w, c.latent.z_w);
    }

    #[test]
    fn zeroed_fc_weights_yield_bias_latents() {
        let net = tiny();
        let mut store = net.init_params(5);
        for fc in [&net.encoder.fc_w, &net.encoder.fc_v, &net.encoder.fc_h] {
            store.params.get_mut(fc.weight).iter_mut().for_each(|v| *v = 0.0);
            for (i, b) in store.params.get_mut(fc.bias).iter_mut().enumerate() {
                *b = i as f32 * 0.25;
            }
        }
        let (hv, hh) = inputs(2, 6);
        let (enc, _) = net
            .encoder
            .forward(&store.params, &mut BnMode::Running(&store.buffers), &hv.cast(), &hh.cast())
            .unwrap();
        let t = enc.latent.triple(1);
        let want: Vec<f32> = (0..net.config.latent_len).map(|i| i as f32 * 0.25).collect();
        assert_eq!(t.z_w, want);
        assert_eq!(t.z_v, want);
        assert_eq!(t.z_h, want);
    }

    #[test]
    fn minimal_decoder_by_hand() {
        // 2x2 grid per polarization, one path of one block, zeroed trunk.
        let cfg = ModelConfig::new(2, 4, 2.0).unwrap().with_trunk(2, 1, 1).unwrap();
        let m = cfg.latent_len;
        let net = Network::new(cfg).unwrap();
        let mut p = net.param_layout::<f64>();
        let b = net.buffer_layout::<f64>();
        let fc = &net.decoder.v.fc;
        for (i, w) in p.get_mut(fc.weight).iter_mut().enumerate() {
            *w = ((i % 5) as f64 - 2.0) * 0.1;
        }
        for (i, w) in p.get_mut(fc.bias).iter_mut().enumerate() {
            *w = i as f64 * 0.05;
        }
        let head = &net.decoder.v.head;
        p.get_mut(head.weight).copy_from_slice(&[1.0, -0.5, 0.25, 2.0]);
        p.get_mut(head.bias).copy_from_slice(&[0.1, -0.2]);
        let latent = LatentBatch {
            n: 1,
            m,
            z_w: (0..m).map(|i| 0.3 * i as f64 - 0.2).collect(),
            z_v: (0..m).map(|i| 0.7 - 0.1 * i as f64).collect(),
            z_h: vec![0.0; m],
        };
        let (rv, _, _) = net.decoder.forward(&p, &mut BnMode::Running(&b), &latent).unwrap();

        let mut z_in = latent.z_v.clone();
        z_in.extend_from_slice(&latent.z_w);
        let wt = p.get(fc.weight);
        let r: Vec<f64> = (0..8)
            .map(|o| p.get(fc.bias)[o] + (0..2 * m).map(|k| wt[o * 2 * m + k] * z_in[k]).sum::<f64>())
            .collect();
        for px in 0..4 {
            let (re, im) = (r[px], r[4 + px]);
            let o0 = sigmoid(1.0 * re - 0.5 * im + 0.1);
            let o1 = sigmoid(0.25 * re + 2.0 * im - 0.2);
            assert!((rv.data[px] - o0).abs() < 1e-12);
            assert!((rv.data[4 + px] - o1).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_map_roundtrip() {
        let ds = crate::chanlab::generate_dataset(&crate::chanlab::ScenarioConfig::cdl_b_like(), 3, 4, 6, 1).unwrap();
        let refs: Vec<&CsiPair> = ds.samples.iter().collect();
        let (hv, hh) = pairs_to_maps::<f32>(&refs).unwrap();
        assert_eq!(hv.shape(), [3, 2, 4, 3]);
        let back = maps_to_pairs(&hv, &hh).unwrap();
        assert_eq!(back, ds.samples);
    }

    #[test]
    fn init_is_seeded() {
        let net = tiny();
        assert_eq!(net.init_params(9).params, net.init_params(9).params);
        assert_ne!(net.init_params(9).params, net.init_params(10).params);
        let store = net.init_params(9);
        for spec in store.params.specs() {
            let vals = &store.params.data()[spec.range()];
            if spec.name.ends_with(".bias") || spec.name.ends_with(".beta") {
                assert!(vals.iter().all(|&v| v == 0.0), "{}", spec.name);
            }
            if spec.name.ends_with(".gamma") {
                assert!(vals.iter().all(|&v| v == 1.0), "{}", spec.name);
            }
        }
    }
}
