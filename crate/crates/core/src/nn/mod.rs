//! Minimal batched tensor engine with hand-written backward passes: 2-D
//! convolutions ("same" padding, odd kernels), batch normalization, affine
//! layers and pointwise activations. Generic over `f32` (training) and `f64`
//! (gradient checks).

mod conv;
mod linear;
mod maps;
mod norm;
mod params;
mod real;

pub use conv::Conv2d;
pub use linear::Linear;
pub use maps::Maps;
pub use norm::{CompositeCache, CompositeConv, BN_EPS, BN_MOMENTUM};
pub use params::{ParamId, ParamSet, ParamSpec};
pub use real::{matmul, Real};

/// Negative-side slope of every leaky activation in the network.
pub const LEAKY_SLOPE: f64 = 0.3;

pub fn leaky<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::lit(LEAKY_SLOPE)
    }
}

pub fn leaky_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
