use std::path::Path;

use crate::chanlab::{apply_normalizer, denormalize_pair, CsiDataset, CsiPair, NormScaler};
use crate::error::{Error, Result};
use crate::model::{maps_to_pairs, pairs_to_maps, read_checkpoint, LatentBatch, Network, ParameterStore};
use crate::quant::{quantized_inference, QuantConfig, QuantizedOutput};
use crate::trainer::checkpoint_scaler;

const CHUNK: usize = 100;

/// A checkpointed model with the normalizer it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Network,
    pub store: ParameterStore,
    pub scaler: NormScaler,
}

impl TrainedModel {
    pub fn new(store: ParameterStore) -> Result<Self> {
        let net = Network::new(store.config.clone())?;
        net.check_layout(&store.params, Some(&store.buffers))?;
        let scaler = checkpoint_scaler(&store)?;
        Ok(TrainedModel { net, store, scaler })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_checkpoint(path)?)
    }

    /// The dataset mapped through this model's normalizer. Already
    /// normalized data must carry the same normalizer.
    pub fn normalized(&self, data: &CsiDataset) -> Result<CsiDataset> {
        let c = &self.net.config;
        if (data.n_s, data.n_t) != (c.n_s, c.n_t) {
            return Err(Error::Dimension(format!(
                "data grid {}x{} does not match model {}x{}",
                data.n_s, data.n_t, c.n_s, c.n_t
            )));
        }
        match data.scaler {
            None => Ok(apply_normalizer(data, &self.scaler)?.0),
            Some(s) if s == self.scaler => Ok(data.clone()),
            Some(_) => Err(Error::Config("data was normalized with a different normalizer".into())),
        }
    }

    /// Channel-unit samples of a normalized dataset.
    pub fn channel_units(&self, normalized: &CsiDataset) -> Vec<CsiPair> {
        normalized.samples.iter().map(|p| denormalize_pair(p, &self.scaler)).collect()
    }

    /// Evaluation-mode reconstructions of normalized pairs, in channel units.
    pub fn recover(&self, normalized: &[CsiPair]) -> Result<Vec<CsiPair>> {
        let refs: Vec<&CsiPair> = normalized.iter().collect();
        let (hv, hh) = pairs_to_maps::<f32>(&refs)?;
        let (rv, rh) = self.net.reconstruct(&self.store.params, &self.store.buffers, &hv, &hh, CHUNK)?;
        Ok(maps_to_pairs(&rv, &rh)?.iter().map(|p| denormalize_pair(p, &self.scaler)).collect())
    }

    pub fn latents(&self, normalized: &[CsiPair]) -> Result<LatentBatch<f32>> {
        let refs: Vec<&CsiPair> = normalized.iter().collect();
        let (hv, hh) = pairs_to_maps::<f32>(&refs)?;
        self.net.encode(&self.store.params, &self.store.buffers, &hv, &hh, CHUNK)
    }

    /// Quantized reconstructions in channel units.
    pub fn recover_quantized(&self, normalized: &[CsiPair], cfg: &QuantConfig) -> Result<QuantizedOutput> {
        let mut out = quantized_inference(&self.net, &self.store.params, &self.store.buffers, normalized, cfg)?;
        out.recovered = out.recovered.iter().map(|p| denormalize_pair(p, &self.scaler)).collect();
        Ok(out)
    }
}
