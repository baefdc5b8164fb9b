use crate::error::Result;
use crate::nn::{CompositeCache, CompositeConv, Conv2d, Maps, ParamSet, Real};

/// How batch normalization behaves during a forward pass.
pub enum BnMode<'a, T> {
    /// Batch statistics; running statistics are updated when a buffer set is
    /// given.
    Batch(Option<&'a mut ParamSet<T>>),
    /// Frozen running statistics (evaluation).
    Running(&'a ParamSet<T>),
}

impl<T> BnMode<'_, T> {
    pub fn reborrow(&mut self) -> BnMode<'_, T> {
        match self {
            BnMode::Batch(b) => BnMode::Batch(b.as_deref_mut()),
            BnMode::Running(b) => BnMode::Running(b),
        }
    }

    pub fn is_batch(&self) -> bool {
        matches!(self, BnMode::Batch(_))
    }
}

fn run<T: Real>(
    cc: &CompositeConv,
    params: &ParamSet<T>,
    mode: &mut BnMode<'_, T>,
    x: &Maps<T>,
) -> Result<(Maps<T>, Option<CompositeCache<T>>)> {
    match mode {
        BnMode::Running(b) => Ok((cc.forward_eval(params, b, x)?, None)),
        BnMode::Batch(b) => {
            let (out, cache) = cc.forward_train(params, b.as_deref_mut(), x)?;
            Ok((out, Some(cache)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Encoder block: separable `1 x k` then `k x 1` branch pairs, no shortcut.
    Extract,
    /// Decoder block: square `k x k` branch pairs plus an identity shortcut.
    Recover,
}

/// Multi-branch convolutional attention block. A lifted feature map passes
/// through parallel kernel branches whose sum becomes a 2-channel mask that
/// gates a pointwise projection of the raw input.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub name: String,
    pub kind: BlockKind,
    pub c_in: usize,
    lift: CompositeConv,
    branches: Vec<[CompositeConv; 2]>,
    identity_branch: bool,
    mask: CompositeConv,
    project: Conv2d,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    lift: CompositeCache<T>,
    branches: Vec<[CompositeCache<T>; 2]>,
    sum: Maps<T>,
    mask: CompositeCache<T>,
    projected: Maps<T>,
}

pub const LIFT_KERNEL: usize = 3;

impl AttentionBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        buffers: &mut ParamSet<T>,
        name: &str,
        kind: BlockKind,
        c_in: usize,
        channels: usize,
        kernels: &[usize],
        identity_branch: bool,
    ) -> Self {
        let lift = CompositeConv::new(
            params,
            buffers,
            &format!("{name}.lift"),
            c_in,
            channels,
            LIFT_KERNEL,
            LIFT_KERNEL,
        );
        let branches = kernels
            .iter()
            .map(|&k| {
                let (first, second) = match kind {
                    BlockKind::Extract => ((1, k), (k, 1)),
                    BlockKind::Recover => ((k, k), (k, k)),
                };
                [
                    CompositeConv::new(
                        params,
                        buffers,
                        &format!("{name}.branch{k}.a"),
                        channels,
                        channels,
                        first.0,
                        first.1,
                    ),
                    CompositeConv::new(
                        params,
                        buffers,
                        &format!("{name}.branch{k}.b"),
                        channels,
                        channels,
                        second.0,
                        second.1,
                    ),
                ]
            })
            .collect();
        let mask = CompositeConv::new(params, buffers, &format!("{name}.mask"), channels, 2, 1, 1);
        let project = Conv2d::new(params, format!("{name}.project"), c_in, 2, 1, 1);
        AttentionBlock {
            name: name.to_string(),
            kind,
            c_in,
            lift,
            branches,
            identity_branch,
            mask,
            project,
        }
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        mode: &mut BnMode<'_, T>,
        x: &Maps<T>,
    ) -> Result<(Maps<T>, Option<BlockCache<T>>)> {
        x.expect_shape(&self.name, self.c_in, x.h, x.w)?;
        let (f, lift_c) = run(&self.lift, params, mode, x)?;
        let mut sum = if self.identity_branch { f.clone() } else { f.zeros_like() };
        let mut branch_caches = Vec::with_capacity(self.branches.len());
        for [a, b] in &self.branches {
            let (u, ca) = run(a, params, mode, &f)?;
            let (v, cb) = run(b, params, mode, &u)?;
            sum.add_assign(&v);
            if let (Some(ca), Some(cb)) = (ca, cb) {
                branch_caches.push([ca, cb]);
            }
        }
        let (m, mask_c) = run(&self.mask, params, mode, &sum)?;
        let p = self.project.forward(params, x)?;
        let mut out = p.clone();
        for (o, &g) in out.data.iter_mut().zip(&m.data) {
            *o *= g;
        }
        if self.kind == BlockKind::Recover {
            out.add_assign(x);
        }
        out.check_finite(&self.name)?;
        let cache = match (lift_c, mask_c) {
            (Some(lift), Some(mask)) => Some(BlockCache {
                lift,
                branches: branch_caches,
                sum,
                mask,
                projected: p,
            }),
            _ => None,
        };
        Ok((out, cache))
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &Maps<T>,
        cache: &BlockCache<T>,
        dout: &Maps<T>,
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Option<Maps<T>> {
        let m = self.mask.activation(params, &cache.mask);
        let mut dp = dout.clone();
        let mut dm = dout.clone();
        for ((dpi, dmi), (&mi, &pi)) in dp
            .data
            .iter_mut()
            .zip(dm.data.iter_mut())
            .zip(m.data.iter().zip(&cache.projected.data))
        {
            *dpi *= mi;
            *dmi *= pi;
        }
        let dsum = self
            .mask
            .backward(params, &cache.sum, &cache.mask, &dm, grads, true)
            .expect("input gradient requested");
        let f = self.lift.activation(params, &cache.lift);
        let mut df = if self.identity_branch { dsum.clone() } else { dsum.zeros_like() };
        for ([a, b], [ca, cb]) in self.branches.iter().zip(&cache.branches) {
            let u = a.activation(params, ca);
            let du = b.backward(params, &u, cb, &dsum, grads, true).expect("input gradient requested");
            let dfi = a.backward(params, &f, ca, &du, grads, true).expect("input gradient requested");
            df.add_assign(&dfi);
        }
        let dx_lift = self.lift.backward(params, x, &cache.lift, &df, grads, need_input_grad);
        let dx_proj = self.project.backward(params, x, &dp, grads, need_input_grad);
        match (dx_lift, dx_proj) {
            (Some(mut dx), Some(dxp)) => {
                dx.add_assign(&dxp);
                if self.kind == BlockKind::Recover {
                    dx.add_assign(dout);
                }
                Some(dx)
            }
            _ => None,
        }
    }
}
