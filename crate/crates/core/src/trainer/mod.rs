//! Losses, the two-step alternating optimization of the autoencoder and the
//! information estimators, training history and gradient verification.

mod adam;
mod gradcheck;
mod history;
mod loss;

pub use adam::{clip_global_norm, Adam};
pub use gradcheck::{finite_diff_gradcheck, tiny_config, GradFault, GradcheckOptions, GradcheckReport, GroupCheck};
pub use history::{EpochRecord, TrainHistory, HISTORY_HEADER};
pub use loss::{
    estimator_gradients, estimator_loss, frozen_shared_map, model_gradients, mse_loss, total_loss, EstimatorLoss,
    LossParts, MiWeight,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::chanlab::{apply_normalizer, denormalize_pair, fit_normalizer, CsiDataset, CsiPair, NormScaler};
use crate::error::{Error, Result};
use crate::evalkit::nmse_db;
use crate::kv::KvMap;
use crate::miest::{club_mi_estimate, EstimatorPair, DEFAULT_HIDDEN};
use crate::model::{maps_to_pairs, pairs_to_maps, write_checkpoint, ModelConfig, Network, ParameterStore};
use crate::nn::{Maps, ParamSet};
use crate::rng::{stream_rng, Stream};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
/// Checkpoint metadata keys holding the training normalizer.
pub const NORM_LO_KEY: &str = "norm.lo";
pub const NORM_HI_KEY: &str = "norm.hi";

const EVAL_CHUNK: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub lambda: f64,
    /// Target information distance, nats.
    pub mi_target: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Write a rolling checkpoint every this many epochs; 0 disables it.
    pub checkpoint_every: usize,
    pub estimator_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lambda: 1e-5,
            mi_target: 0.0,
            epochs: 100,
            batch: 200,
            seed: 0,
            clip_norm: 5.0,
            checkpoint_every: 10,
            estimator_hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !self.mi_target.is_finite() {
            return Err(Error::Config("information target must be finite".into()));
        }
        if self.batch < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {}", self.batch)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if self.estimator_hidden == 0 {
            return Err(Error::Config("estimator hidden width must be positive".into()));
        }
        Ok(())
    }

    pub fn weight(&self) -> MiWeight {
        MiWeight {
            lambda: self.lambda,
            target: self.mi_target,
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("lr", self.lr);
        kv.set("lambda", self.lambda);
        kv.set("mi_target_nats", self.mi_target);
        kv.set("epochs", self.epochs);
        kv.set("batch", self.batch);
        kv.set("seed", self.seed);
        kv.set("clip_norm", self.clip_norm);
        kv.set("checkpoint_every", self.checkpoint_every);
        kv.set("estimator_hidden", self.estimator_hidden);
        kv
    }

    /// Reads the keys written by [`TrainConfig::to_kv`]; missing keys keep
    /// their defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            lr: kv.parse_or("lr", d.lr)?,
            lambda: kv.parse_or("lambda", d.lambda)?,
            mi_target: kv.parse_or("mi_target_nats", d.mi_target)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            batch: kv.parse_or("batch", d.batch)?,
            seed: kv.parse_or("seed", d.seed)?,
            clip_norm: kv.parse_or("clip_norm", d.clip_norm)?,
            checkpoint_every: kv.parse_or("checkpoint_every", d.checkpoint_every)?,
            estimator_hidden: kv.parse_or("estimator_hidden", d.estimator_hidden)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lr={} lambda={} target={} epochs={} batch={} seed={}",
            self.lr, self.lambda, self.mi_target, self.epochs, self.batch, self.seed
        )
    }
}

/// Mutable training state: model, normalization buffers, estimators and
/// both optimizers.
#[derive(Debug, Clone)]
pub struct TrainState<'a> {
    net: &'a Network,
    ests: &'a EstimatorPair,
    cfg: TrainConfig,
    pub params: ParamSet<f32>,
    pub buffers: ParamSet<f32>,
    pub est_params: ParamSet<f32>,
    model_opt: Adam,
    est_opt: Adam,
    grads: ParamSet<f32>,
    est_grads: ParamSet<f32>,
}

impl<'a> TrainState<'a> {
    /// Fresh state from the configured seed.
    pub fn new(net: &'a Network, ests: &'a EstimatorPair, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let store = net.init_params(cfg.seed);
        let est_params = ests.init(&mut stream_rng(cfg.seed, Stream::EstimatorInit));
        Self::from_parts(net, ests, cfg, store.params, store.buffers, est_params)
    }

    pub fn from_parts(
        net: &'a Network,
        ests: &'a EstimatorPair,
        cfg: TrainConfig,
        params: ParamSet<f32>,
        buffers: ParamSet<f32>,
        est_params: ParamSet<f32>,
    ) -> Result<Self> {
        net.check_layout(&params, Some(&buffers))?;
        if !est_params.same_layout(&ests.param_layout::<f32>()) {
            return Err(Error::Inconsistent("estimator parameter layout does not match".into()));
        }
        Ok(TrainState {
            net,
            ests,
            model_opt: Adam::new(params.len()),
            est_opt: Adam::new(est_params.len()),
            grads: params.zeros_like(),
            est_grads: est_params.zeros_like(),
            cfg,
            params,
            buffers,
            est_params,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.model_opt.steps()
    }

    /// Step one: updates encoder and decoder on `L_MSE + lambda * L_MI` with
    /// the estimators fixed. A non-finite loss leaves every parameter
    /// untouched.
    pub fn train_step_main(&mut self, hv: &Maps<f32>, hh: &Maps<f32>) -> Result<LossParts> {
        self.grads.fill(0.0);
        let mut buffers = self.buffers.clone();
        let parts = model_gradients(
            self.net,
            self.ests,
            &self.params,
            Some(&mut buffers),
            &self.est_params,
            hv,
            hh,
            self.cfg.weight(),
            &mut self.grads,
        )?;
        if !parts.total.is_finite() || !self.grads.data().iter().all(|g| g.is_finite()) {
            return Ok(LossParts {
                total: f64::NAN,
                ..parts
            });
        }
        self.buffers = buffers;
        clip_global_norm(self.grads.data_mut(), self.cfg.clip_norm);
        self.model_opt.step(self.params.data_mut(), self.grads.data(), self.cfg.lr);
        Ok(parts)
    }

    /// Step two: updates both estimators on their negative log-likelihoods,
    /// with the shared map produced by the frozen encoder.
    pub fn train_step_mi(&mut self, hv: &Maps<f32>, hh: &Maps<f32>) -> Result<EstimatorLoss> {
        let shared = frozen_shared_map(self.net, &self.params, hv, hh)?;
        self.est_grads.fill(0.0);
        let loss = estimator_gradients(self.ests, &self.est_params, hv, hh, &shared, &mut self.est_grads)?;
        if !loss.total().is_finite() || !self.est_grads.data().iter().all(|g| g.is_finite()) {
            return Ok(EstimatorLoss {
                shared_nll: f64::NAN,
                ..loss
            });
        }
        clip_global_norm(self.est_grads.data_mut(), self.cfg.clip_norm);
        self.est_opt.step(self.est_params.data_mut(), self.est_grads.data(), self.cfg.lr);
        Ok(loss)
    }

    /// Information estimates `(shared, cross)` in nats on a probe batch, with
    /// the model in evaluation mode.
    pub fn probe_information(&self, hv: &Maps<f32>, hh: &Maps<f32>) -> Result<(f64, f64)> {
        let n = hv.n;
        let shared = self.net.encode_shared(&self.params, &self.buffers, hv, hh)?;
        let x = Maps::concat_channels(hv, hh)?;
        let mi_shared = club_mi_estimate(&self.ests.shared, &self.est_params, &x.data, &shared.data, n)?;
        let mi_cross = club_mi_estimate(&self.ests.cross, &self.est_params, &hv.data, &hh.data, n)?;
        Ok((mi_shared, mi_cross))
    }

    pub fn to_store(&self, meta: KvMap) -> ParameterStore {
        let mut store = ParameterStore::new(
            self.net.config.clone(),
            self.params.clone(),
            self.buffers.clone(),
            self.cfg.seed,
        );
        store.estimators = self.est_params.clone();
        store.meta = meta;
        store.step = self.steps();
        store
    }
}

/// Normalized training data as maps plus the channel-unit originals used for
/// NMSE.
struct Prepared {
    hv: Maps<f32>,
    hh: Maps<f32>,
    raw: Vec<CsiPair>,
    scaler: NormScaler,
}

fn prepare(ds: &CsiDataset, what: &str) -> Result<Prepared> {
    let scaler = ds
        .scaler
        .ok_or_else(|| Error::Config(format!("{what} set must be normalized before training")))?;
    if ds.len() < 2 {
        return Err(Error::Config(format!("{what} set needs at least 2 samples, has {}", ds.len())));
    }
    let refs: Vec<&CsiPair> = ds.samples.iter().collect();
    let (hv, hh) = pairs_to_maps(&refs)?;
    let raw = ds.samples.iter().map(|p| denormalize_pair(p, &scaler)).collect();
    Ok(Prepared { hv, hh, raw, scaler })
}

/// NMSE in dB of the model's evaluation-mode reconstructions, measured in
/// channel units.
pub fn evaluate_nmse_db(
    net: &Network,
    params: &ParamSet<f32>,
    buffers: &ParamSet<f32>,
    hv: &Maps<f32>,
    hh: &Maps<f32>,
    truth: &[CsiPair],
    scaler: &NormScaler,
) -> Result<f64> {
    let (rv, rh) = net.reconstruct(params, buffers, hv, hh, EVAL_CHUNK)?;
    let pred: Vec<CsiPair> = maps_to_pairs(&rv, &rh)?.iter().map(|p| denormalize_pair(p, scaler)).collect();
    nmse_db(&pred, truth)
}

/// Result of [`fit`]: the best-validation and final stores plus history.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best: ParameterStore,
    pub last: ParameterStore,
    pub best_epoch: Option<usize>,
    pub history: TrainHistory,
}

/// Where and how `fit` reports progress.
#[derive(Default)]
pub struct FitSink<'a> {
    /// Directory receiving checkpoints and the history table.
    pub out_dir: Option<PathBuf>,
    pub on_epoch: Option<Box<dyn FnMut(&EpochRecord) + 'a>>,
}

pub fn fit(train: &CsiDataset, val: &CsiDataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with(train, val, model, cfg, FitSink::default())
}

/// Runs `cfg.epochs` epochs of the alternating procedure: every batch takes
/// a model step followed by an estimator step. Records one history row per
/// epoch and keeps the checkpoint with the lowest validation NMSE.
pub fn fit_with(
    train: &CsiDataset,
    val: &CsiDataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut sink: FitSink<'_>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let net = Network::new(model.clone())?;
    let ests = EstimatorPair::new(model.n_s, model.n_t, cfg.estimator_hidden);
    let tr = prepare(train, "training")?;
    let va = prepare(val, "validation")?;
    if tr.scaler != va.scaler {
        return Err(Error::Config("training and validation sets use different normalizers".into()));
    }
    if tr.hv.shape()[1..] != [2, model.n_s, model.pol_width()] {
        return Err(Error::Dimension(format!(
            "data grid {}x{} does not match model {}",
            train.n_s, train.n_t, model
        )));
    }
    if let Some(dir) = &sink.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut state = TrainState::new(&net, &ests, cfg.clone())?;
    let mut history = TrainHistory::default();
    let meta = |epoch: Option<usize>, nmse: Option<f64>| {
        let mut kv = KvMap::new();
        for (k, v) in cfg.to_kv().iter() {
            kv.set(&format!("train.{k}"), v);
        }
        kv.set(NORM_LO_KEY, tr.scaler.lo);
        kv.set(NORM_HI_KEY, tr.scaler.hi);
        if let Some(e) = epoch {
            kv.set("epoch", e);
        }
        if let Some(v) = nmse {
            kv.set("val_nmse_db", v);
        }
        kv
    };
    let mut best = state.to_store(meta(None, None));
    let mut best_epoch = None;
    let mut best_nmse = f64::INFINITY;

    let probe: Vec<usize> = (0..va.hv.n.min(cfg.batch)).collect();
    let (probe_v, probe_h) = (va.hv.gather(&probe), va.hh.gather(&probe));
    let mut order: Vec<usize> = (0..tr.hv.n).collect();
    let mut rng = stream_rng(cfg.seed, Stream::Batching);
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut mse, mut mi, mut batches) = (0.0, 0.0, 0usize);
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let (hv, hh) = (tr.hv.gather(idx), tr.hh.gather(idx));
            let parts = state.train_step_main(&hv, &hh)?;
            let est = state.train_step_mi(&hv, &hh)?;
            if !parts.total.is_finite() || !est.total().is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            mse += parts.mse;
            mi += parts.mi_loss;
            batches += 1;
        }
        let val_nmse = evaluate_nmse_db(&net, &state.params, &state.buffers, &va.hv, &va.hh, &va.raw, &va.scaler)?;
        let (mi_shared, mi_cross) = state.probe_information(&probe_v, &probe_h)?;
        let record = EpochRecord {
            epoch,
            train_mse: mse / batches.max(1) as f64,
            train_mi_loss: mi / batches.max(1) as f64,
            val_nmse_db: val_nmse,
            mi_shared,
            mi_cross,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        if val_nmse < best_nmse {
            best_nmse = val_nmse;
            best_epoch = Some(epoch);
            best = state.to_store(meta(Some(epoch), Some(val_nmse)));
            if let Some(dir) = &sink.out_dir {
                write_checkpoint(&best, &dir.join(BEST_CHECKPOINT))?;
            }
        }
        history.records.push(record);
        if let Some(dir) = &sink.out_dir {
            history.write_csv(&dir.join(HISTORY_FILE))?;
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                write_checkpoint(&state.to_store(meta(Some(epoch), Some(val_nmse))), &dir.join(LAST_CHECKPOINT))?;
            }
        }
        if let Some(cb) = sink.on_epoch.as_mut() {
            cb(history.records.last().expect("just pushed"));
        }
    }

    let last_epoch = cfg.epochs.checked_sub(1);
    let last_nmse = history.records.last().map(|r| r.val_nmse_db);
    let last = state.to_store(meta(last_epoch, last_nmse));
    if let Some(dir) = &sink.out_dir {
        write_checkpoint(&last, &dir.join(FINAL_CHECKPOINT))?;
        if best_epoch.is_none() {
            write_checkpoint(&best, &dir.join(BEST_CHECKPOINT))?;
        }
        history.write_csv(&dir.join(HISTORY_FILE))?;
    }
    Ok(FitOutcome {
        best,
        last,
        best_epoch,
        history,
    })
}

/// Training and validation sets under one normalizer: raw sets are both
/// mapped through the normalizer fitted on `train`; normalized sets must
/// already share one.
pub fn normalize_split(train: &CsiDataset, val: &CsiDataset) -> Result<(CsiDataset, CsiDataset)> {
    match (train.scaler, val.scaler) {
        (None, None) => {
            let scaler = fit_normalizer(train)?;
            Ok((apply_normalizer(train, &scaler)?.0, apply_normalizer(val, &scaler)?.0))
        }
        (Some(a), Some(b)) if a == b => Ok((train.clone(), val.clone())),
        _ => Err(Error::Config("training and validation sets use different normalizers".into())),
    }
}

/// Normalizer recorded in a checkpoint written by [`fit_with`].
pub fn checkpoint_scaler(store: &ParameterStore) -> Result<NormScaler> {
    NormScaler::new(store.meta.parse_req(NORM_LO_KEY)?, store.meta.parse_req(NORM_HI_KEY)?)
}

/// Paths `fit_with` writes under `dir`.
pub fn run_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(BEST_CHECKPOINT), dir.join(FINAL_CHECKPOINT), dir.join(HISTORY_FILE)]
}
