use super::Real;
use crate::error::{Error, Result};

/// Batch of feature maps, layout `[n, c, h, w]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Maps<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Maps {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::shape(
                "maps",
                format!("{} values for shape [{n}, {c}, {h}, {w}]", data.len()),
            ));
        }
        Ok(Maps { n, c, h, w, data })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn expect_shape(&self, layer: &str, c: usize, h: usize, w: usize) -> Result<()> {
        if self.c != c || self.h != h || self.w != w {
            return Err(Error::shape(
                layer,
                format!("expected [_, {c}, {h}, {w}], got {:?}", self.shape()),
            ));
        }
        Ok(())
    }

    pub fn check_finite(&self, layer: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { layer: layer.to_string() })
        }
    }

    /// Channel-wise concatenation of two batches with equal n, h, w.
    pub fn concat_channels(a: &Maps<T>, b: &Maps<T>) -> Result<Maps<T>> {
        if a.n != b.n || a.h != b.h || a.w != b.w {
            return Err(Error::shape(
                "concat",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let mut out = Maps::zeros(a.n, a.c + b.c, a.h, a.w);
        let (la, lb) = (a.sample_len(), b.sample_len());
        for i in 0..a.n {
            let dst = out.sample_mut(i);
            dst[..la].copy_from_slice(a.sample(i));
            dst[la..la + lb].copy_from_slice(b.sample(i));
        }
        Ok(out)
    }

    /// Inverse of [`Maps::concat_channels`]: the first `c_first` channels and
    /// the rest.
    pub fn split_channels(&self, c_first: usize) -> (Maps<T>, Maps<T>) {
        let mut a = Maps::zeros(self.n, c_first, self.h, self.w);
        let mut b = Maps::zeros(self.n, self.c - c_first, self.h, self.w);
        let la = a.sample_len();
        for i in 0..self.n {
            let src = self.sample(i);
            a.sample_mut(i).copy_from_slice(&src[..la]);
            b.sample_mut(i).copy_from_slice(&src[la..]);
        }
        (a, b)
    }

    pub fn add_assign(&mut self, other: &Maps<T>) {
        assert_eq!(self.shape(), other.shape(), "add of mismatched maps");
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
    }

    pub fn gather(&self, indices: &[usize]) -> Maps<T> {
        let l = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * l);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Maps {
            n: indices.len(),
            c: self.c,
            h: self.h,
            w: self.w,
            data,
        }
    }

    pub fn cast<U: Real>(&self) -> Maps<U> {
        Maps {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_is_identity() {
        let a = Maps::from_vec(2, 1, 1, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Maps::from_vec(2, 2, 1, 2, (10..18).map(|x| x as f32).collect()).unwrap();
        let c = Maps::concat_channels(&a, &b).unwrap();
        assert_eq!(c.sample(1), &[3.0, 4.0, 14.0, 15.0, 16.0, 17.0]);
        let (x, y) = c.split_channels(1);
        assert_eq!(x, a);
        assert_eq!(y, b);
    }
}
