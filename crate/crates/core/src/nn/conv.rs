use super::{matmul, Maps, ParamId, ParamSet, Real};
use crate::error::{Error, Result};

/// 2-D convolution with "same" zero padding, stride 1 and odd kernel sizes.
/// Weight layout `[c_out, c_in, kh, kw]`, bias `[c_out]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
}

/// Zero-pads one sample `[c, h, w]` into `[c, h + kh - 1, w + kw - 1]`.
fn pad<T: Real>(x: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize, out: &mut Vec<T>) {
    let (hp, wp) = (h + kh - 1, w + kw - 1);
    let (ph, pw) = (kh / 2, kw / 2);
    out.clear();
    out.resize(c * hp * wp, T::zero());
    for ci in 0..c {
        for y in 0..h {
            let src = &x[(ci * h + y) * w..][..w];
            out[(ci * hp + y + ph) * wp + pw..][..w].copy_from_slice(src);
        }
    }
}

/// Offsets of every kernel tap `(ci, a, b)` inside a padded sample.
fn tap_offsets(c_in: usize, hp: usize, wp: usize, kh: usize, kw: usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(c_in * kh * kw);
    for ci in 0..c_in {
        for a in 0..kh {
            for b in 0..kw {
                off.push((ci * hp + a) * wp + b);
            }
        }
    }
    off
}

/// Accumulates `CO` output channels of one `W`-wide output row:
/// `out[co][x] += sum_k wt[k][co] * xpad[base + off[k] + x]`.
#[inline(always)]
fn row_tile<T: Real, const CO: usize, const W: usize>(
    xpad: &[T],
    base: usize,
    off: &[usize],
    wt: &[T],
    c_stride: usize,
    out: &mut [[T; W]; CO],
) {
    for (k, &o) in off.iter().enumerate() {
        let xs: &[T; W] = xpad[base + o..base + o + W].try_into().expect("row tile");
        let wk = &wt[k * c_stride..k * c_stride + CO];
        for co in 0..CO {
            let wv = wk[co];
            for x in 0..W {
                out[co][x] = wv.mul_add(xs[x], out[co][x]);
            }
        }
    }
}

/// Direct "same" correlation of a padded sample with a tap-major weight
/// `wt[k][co]`, accumulated into `out` `[c_out, h, w]`.
#[allow(clippy::too_many_arguments)]
fn correlate<T: Real>(
    xpad: &[T],
    wt: &[T],
    off: &[usize],
    c_out: usize,
    h: usize,
    w: usize,
    wp: usize,
    out: &mut [T],
) {
    fn tiled<T: Real, const CO: usize, const W: usize>(
        xpad: &[T],
        wt: &[T],
        off: &[usize],
        c_out: usize,
        co0: usize,
        h: usize,
        w: usize,
        wp: usize,
        out: &mut [T],
    ) {
        for y in 0..h {
            for x0 in (0..w).step_by(W) {
                let mut acc = [[T::zero(); W]; CO];
                row_tile::<T, CO, W>(xpad, y * wp + x0, off, &wt[co0..], c_out, &mut acc);
                for (co, row) in acc.iter().enumerate() {
                    let dst = &mut out[((co0 + co) * h + y) * w + x0..][..W];
                    for (d, &v) in dst.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
        }
    }

    let mut co0 = 0;
    while co0 < c_out {
        let left = c_out - co0;
        let step = match (left, w.is_multiple_of(16), w.is_multiple_of(8)) {
            (4.., true, _) => {
                tiled::<T, 4, 16>(xpad, wt, off, c_out, co0, h, w, wp, out);
                4
            }
            (2.., true, _) => {
                tiled::<T, 2, 16>(xpad, wt, off, c_out, co0, h, w, wp, out);
                2
            }
            (1.., true, _) => {
                tiled::<T, 1, 16>(xpad, wt, off, c_out, co0, h, w, wp, out);
                1
            }
            (8.., _, true) => {
                tiled::<T, 8, 8>(xpad, wt, off, c_out, co0, h, w, wp, out);
                8
            }
            (4.., _, true) => {
                tiled::<T, 4, 8>(xpad, wt, off, c_out, co0, h, w, wp, out);
                4
            }
            _ => {
                for y in 0..h {
                    for x in 0..w {
                        let mut s = T::zero();
                        for (k, &o) in off.iter().enumerate() {
                            s += wt[k * c_out + co0] * xpad[y * wp + x + o];
                        }
                        out[(co0 * h + y) * w + x] += s;
                    }
                }
                1
            }
        };
        co0 += step;
    }
}

/// Weight gradient of one sample: `dw[co][k] += sum_{y,x} dy[co][y][x] *
/// xpad[y * wp + off[k] + x]`.
#[allow(clippy::too_many_arguments)]
fn weight_grad<T: Real>(xpad: &[T], dy: &[T], off: &[usize], c_out: usize, h: usize, w: usize, wp: usize, dw: &mut [T]) {
    let kk = off.len();
    if w.is_multiple_of(8) {
        let mut co0 = 0;
        while co0 < c_out {
            let step = if c_out - co0 >= 4 {
                grad_tile::<T, 4, 2>(xpad, dy, off, co0, h, w, wp, dw);
                4
            } else {
                grad_tile::<T, 1, 4>(xpad, dy, off, co0, h, w, wp, dw);
                1
            };
            co0 += step;
        }
        return;
    }
    let mut acc = vec![T::zero(); w];
    for co in 0..c_out {
        let dplane = &dy[co * h * w..(co + 1) * h * w];
        for (k, &o) in off.iter().enumerate() {
            acc.fill(T::zero());
            for y in 0..h {
                let xs = &xpad[y * wp + o..][..w];
                for ((s, &g), &v) in acc.iter_mut().zip(&dplane[y * w..(y + 1) * w]).zip(xs) {
                    *s += g * v;
                }
            }
            dw[co * kk + k] += acc.iter().copied().sum::<T>();
        }
    }
}

/// Accumulates `CO` output channels by `K` taps at a time over 8-wide column strips.
#[allow(clippy::too_many_arguments)]
fn grad_tile<T: Real, const CO: usize, const K: usize>(
    xpad: &[T],
    dy: &[T],
    off: &[usize],
    co0: usize,
    h: usize,
    w: usize,
    wp: usize,
    dw: &mut [T],
) {
    let kk = off.len();
    let full = kk - kk % K;
    for k0 in (0..full).step_by(K) {
        grad_block::<T, CO, K>(xpad, dy, &off[k0..k0 + K], co0, h, w, wp, kk, k0, dw);
    }
    for k0 in full..kk {
        grad_block::<T, CO, 1>(xpad, dy, &off[k0..k0 + 1], co0, h, w, wp, kk, k0, dw);
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn grad_block<T: Real, const CO: usize, const K: usize>(
    xpad: &[T],
    dy: &[T],
    off: &[usize],
    co0: usize,
    h: usize,
    w: usize,
    wp: usize,
    kk: usize,
    k0: usize,
    dw: &mut [T],
) {
    let plane = h * w;
    let off: [usize; K] = off.try_into().expect("tap block");
    let mut acc = [[[T::zero(); 8]; K]; CO];
    for y in 0..h {
        for x0 in (0..w).step_by(8) {
            let mut dr = [[T::zero(); 8]; CO];
            for (c, d) in dr.iter_mut().enumerate() {
                let s = (co0 + c) * plane + y * w + x0;
                *d = dy[s..s + 8].try_into().expect("strip");
            }
            for j in 0..K {
                let b = y * wp + x0 + off[j];
                let xs: [T; 8] = xpad[b..b + 8].try_into().expect("strip");
                for c in 0..CO {
                    for x in 0..8 {
                        acc[c][j][x] = dr[c][x].mul_add(xs[x], acc[c][j][x]);
                    }
                }
            }
        }
    }
    for c in 0..CO {
        for j in 0..K {
            dw[(co0 + c) * kk + k0 + j] += acc[c][j].iter().copied().sum::<T>();
        }
    }
}

/// `[c_out, k]` to tap-major `[k, c_out]`.
fn tap_major<T: Real>(wt: &[T], c_out: usize, k: usize) -> Vec<T> {
    let mut t = vec![T::zero(); wt.len()];
    for co in 0..c_out {
        for j in 0..k {
            t[j * c_out + co] = wt[co * k + j];
        }
    }
    t
}

impl Conv2d {
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
    ) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "kernel sizes must be odd");
        let name = name.into();
        let weight = params.register(format!("{name}.weight"), &[c_out, c_in, kh, kw]);
        let bias = params.register(format!("{name}.bias"), &[c_out]);
        Conv2d {
            name,
            weight,
            bias,
            c_in,
            c_out,
            kh,
            kw,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn param_count(&self) -> usize {
        self.c_out * self.fan_in() + self.c_out
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &Maps<T>) -> Result<Maps<T>> {
        if x.c != self.c_in {
            return Err(Error::shape(
                &self.name,
                format!("expected {} input channels, got {}", self.c_in, x.c),
            ));
        }
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let wt = params.get(self.weight);
        let bias = params.get(self.bias);
        let mut out = Maps::zeros(x.n, self.c_out, h, w);
        let mut xpad = Vec::new();
        let (wp, hp) = (w + self.kw - 1, h + self.kh - 1);
        let off = tap_offsets(self.c_in, hp, wp, self.kh, self.kw);
        let wt_t = tap_major(wt, self.c_out, self.fan_in());
        for i in 0..x.n {
            let dst = out.sample_mut(i);
            for (co, &b) in bias.iter().enumerate() {
                dst[co * hw..(co + 1) * hw].fill(b);
            }
            if self.is_pointwise() {
                matmul(self.c_out, self.c_in, hw, wt, false, x.sample(i), false, T::one(), dst);
            } else {
                pad(x.sample(i), self.c_in, h, w, self.kh, self.kw, &mut xpad);
                correlate(&xpad, &wt_t, &off, self.c_out, h, w, wp, dst);
            }
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients into `grads` and, when
    /// `need_input_grad` is set, returns the gradient w.r.t. `x`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &Maps<T>,
        dy: &Maps<T>,
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Option<Maps<T>> {
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let k = self.fan_in();
        let pointwise = self.is_pointwise();

        {
            let db = grads.get_mut(self.bias);
            for i in 0..dy.n {
                let s = dy.sample(i);
                for (co, g) in db.iter_mut().enumerate() {
                    *g += s[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
                }
            }
        }
        let wt = params.get(self.weight);
        let (kh, kw) = (self.kh, self.kw);
        let (hp, wp) = (h + kh - 1, w + kw - 1);
        let mut xpad = Vec::new();
        let off = tap_offsets(self.c_in, hp, wp, kh, kw);
        {
            let dw = grads.get_mut(self.weight);
            for i in 0..x.n {
                if pointwise {
                    matmul(self.c_out, hw, k, dy.sample(i), false, x.sample(i), true, T::one(), dw);
                    continue;
                }
                pad(x.sample(i), self.c_in, h, w, kh, kw, &mut xpad);
                weight_grad(&xpad, dy.sample(i), &off, self.c_out, h, w, wp, dw);
            }
        }
        if !need_input_grad {
            return None;
        }

        let mut dx = Maps::zeros(x.n, self.c_in, h, w);
        if pointwise {
            for i in 0..x.n {
                matmul(
                    self.c_in,
                    self.c_out,
                    hw,
                    wt,
                    true,
                    dy.sample(i),
                    false,
                    T::zero(),
                    dx.sample_mut(i),
                );
            }
            return Some(dx);
        }

        // Input gradient is a "same" correlation of dy with the spatially
        // flipped, channel-transposed kernel.
        // Tap-major flipped kernel: flipped[(co, a', b')][ci].
        let mut flipped = vec![T::zero(); wt.len()];
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                for a in 0..kh {
                    for b in 0..kw {
                        let tap = (co * kh + (kh - 1 - a)) * kw + (kw - 1 - b);
                        flipped[tap * self.c_in + ci] = wt[((co * self.c_in + ci) * kh + a) * kw + b];
                    }
                }
            }
        }
        let off_dy = tap_offsets(self.c_out, hp, wp, kh, kw);
        for i in 0..x.n {
            pad(dy.sample(i), self.c_out, h, w, kh, kw, &mut xpad);
            correlate(&xpad, &flipped, &off_dy, self.c_in, h, w, wp, dx.sample_mut(i));
        }
        Some(dx)
    }
}
