use super::{matmul, ParamId, ParamSet, Real};
use crate::error::{Error, Result};

/// Affine map applied row-wise to a `[n, in]` batch. Weight layout
/// `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Real>(params: &mut ParamSet<T>, name: impl Into<String>, d_in: usize, d_out: usize) -> Self {
        let name = name.into();
        let weight = params.register(format!("{name}.weight"), &[d_out, d_in]);
        let bias = params.register(format!("{name}.bias"), &[d_out]);
        Linear {
            name,
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &[T], n: usize) -> Result<Vec<T>> {
        if x.len() != n * self.d_in {
            return Err(Error::shape(
                &self.name,
                format!("{} inputs for batch {n} of width {}", x.len(), self.d_in),
            ));
        }
        let bias = params.get(self.bias);
        let mut out: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        matmul(n, self.d_in, self.d_out, x, false, params.get(self.weight), true, T::one(), &mut out);
        Ok(out)
    }

    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        dy: &[T],
        n: usize,
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        {
            let db = grads.get_mut(self.bias);
            for row in dy.chunks_exact(self.d_out) {
                for (g, &d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        matmul(self.d_out, n, self.d_in, dy, true, x, false, T::one(), grads.get_mut(self.weight));
        if !need_input_grad {
            return None;
        }
        let mut dx = vec![T::zero(); n * self.d_in];
        matmul(n, self.d_out, self.d_in, dy, false, params.get(self.weight), false, T::zero(), &mut dx);
        Some(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_by_hand() {
        let mut p = ParamSet::<f64>::new();
        let l = Linear::new(&mut p, "fc", 2, 3);
        p.get_mut(l.weight).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        p.get_mut(l.bias).copy_from_slice(&[0.5, -0.5, 1.0]);
        let x = [1.0, -1.0, 2.0, 0.0];
        let y = l.forward(&p, &x, 2).unwrap();
        assert_eq!(y, vec![-0.5, -1.5, 0.0, 2.5, 5.5, 11.0]);
        let dy = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let mut g = p.zeros_like();
        let dx = l.backward(&p, &x, &dy, 2, &mut g, true).unwrap();
        assert_eq!(dx, vec![1.0, 2.0, 5.0, 6.0]);
        assert_eq!(g.get(l.weight), &[1.0, -1.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(g.get(l.bias), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_wrong_width() {
        let mut p = ParamSet::<f32>::new();
        let l = Linear::new(&mut p, "fc", 4, 2);
        assert!(l.forward(&p, &[0.0; 6], 2).is_err());
    }
}
