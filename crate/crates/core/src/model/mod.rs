//! The dual-polarization autoencoder: attention blocks, encoder/decoder
//! wiring, parameter accounting and checkpoints.

mod block;
mod counts;
mod network;
mod store;

use std::fmt;

pub use block::{AttentionBlock, BlockCache, BlockKind, BnMode, LIFT_KERNEL};
pub use counts::{count_fc_params, count_params_actual, sigma_ratio, FcCounts, ParamBreakdown};
pub use network::{
    maps_to_pairs, pairs_to_maps, Decoder, DecoderCache, Encoder, EncoderCache, EncoderOutput, LatentBatch,
    LatentTriple, Network, PolDecoder,
};
pub use store::{read_checkpoint, write_checkpoint, ParameterStore, CHECKPOINT_MAGIC};

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Per-stream latent length: `2 n_s n_t / (3 sigma)` rounded to the nearest
/// integer, ties toward the floor.
pub fn latent_length(n_s: usize, n_t: usize, sigma: f64) -> Result<usize> {
    if !(sigma > 1.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("compression ratio must exceed 1, got {sigma}")));
    }
    let nominal = 2.0 * (n_s * n_t) as f64 / (3.0 * sigma);
    let m = (nominal - 0.5).ceil().max(0.0) as usize;
    if m == 0 {
        return Err(Error::Config(format!(
            "latent length rounds to zero for n_s={n_s}, n_t={n_t}, sigma={sigma}"
        )));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub sigma: f64,
    pub latent_len: usize,
    pub branch_kernels: Vec<usize>,
    pub identity_branch: bool,
    pub channels: usize,
    pub depth: usize,
    pub width: usize,
}

impl ModelConfig {
    pub const DEFAULT_CHANNELS: usize = 16;
    pub const DEFAULT_DEPTH: usize = 3;
    pub const DEFAULT_WIDTH: usize = 5;

    pub fn new(n_s: usize, n_t: usize, sigma: f64) -> Result<Self> {
        let cfg = ModelConfig {
            n_s,
            n_t,
            sigma,
            latent_len: latent_length(n_s, n_t, sigma)?,
            branch_kernels: vec![3, 5, 7],
            identity_branch: true,
            channels: Self::DEFAULT_CHANNELS,
            depth: Self::DEFAULT_DEPTH,
            width: Self::DEFAULT_WIDTH,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_trunk(mut self, channels: usize, depth: usize, width: usize) -> Result<Self> {
        self.channels = channels;
        self.depth = depth;
        self.width = width;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        crate::chanlab::check_dims(self.n_s, self.n_t)?;
        if !(self.sigma > 1.0) {
            return Err(Error::Config(format!("compression ratio must exceed 1, got {}", self.sigma)));
        }
        if self.latent_len == 0 || self.channels == 0 || self.depth == 0 || self.width == 0 {
            return Err(Error::Config(
                "latent length, channels, depth and width must all be positive".into(),
            ));
        }
        if let Some(k) = self.branch_kernels.iter().find(|&&k| k % 2 == 0 || k == 0) {
            return Err(Error::Config(format!("branch kernel sizes must be odd, got {k}")));
        }
        Ok(())
    }

    /// Per-polarization antenna count.
    pub fn pol_width(&self) -> usize {
        self.n_t / 2
    }

    /// Flattened length of one 2-channel map, which is also every encoder
    /// FC input length.
    pub fn map_len(&self) -> usize {
        self.n_s * self.n_t
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("n_s", self.n_s);
        kv.set("n_t", self.n_t);
        kv.set("sigma", self.sigma);
        kv.set("latent_len", self.latent_len);
        kv.set(
            "branch_kernels",
            self.branch_kernels.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("identity_branch", self.identity_branch);
        kv.set("channels", self.channels);
        kv.set("depth", self.depth);
        kv.set("width", self.width);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let kernels = kv
            .get_str("branch_kernels")
            .ok_or_else(|| Error::Config("missing key branch_kernels".into()))?;
        let branch_kernels = if kernels.is_empty() {
            Vec::new()
        } else {
            kernels
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad branch kernel {s:?}")))
                })
                .collect::<Result<Vec<usize>>>()?
        };
        let cfg = ModelConfig {
            n_s: kv.parse_req("n_s")?,
            n_t: kv.parse_req("n_t")?,
            sigma: kv.parse_req("sigma")?,
            latent_len: kv.parse_req("latent_len")?,
            branch_kernels,
            identity_branch: kv.parse_req("identity_branch")?,
            channels: kv.parse_req("channels")?,
            depth: kv.parse_req("depth")?,
            width: kv.parse_req("width")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n_s={} n_t={} sigma={} M={} C={} D={} Wd={}",
            self.n_s, self.n_t, self.sigma, self.latent_len, self.channels, self.depth, self.width
        )
    }
}
