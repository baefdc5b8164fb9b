//! Dual-polarized CSI compression: channel generation, the attention-based
//! autoencoder, mutual-information estimation, training, quantization and
//! evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chanlab;
pub mod error;
pub mod evalkit;
pub mod kv;
pub mod miest;
pub mod model;
pub mod nn;
pub mod quant;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
