use std::path::Path;

use anyhow::{bail, Context, Result};
use dualpol_core::chanlab::{invert_normalizer, mean_profile, CsiDataset, CsiPair};
use dualpol_core::evalkit::{emit_report, linear_baseline, nmse_db, EvalReport, RateTable, TrainedModel};
use dualpol_core::kv::KvMap;
use dualpol_core::model::count_params_actual;
use dualpol_core::quant::QuantConfig;

use super::{create_dir, load};
use crate::config::{input, value, Flags, Key, Settings};
use crate::{EvalArgs, QuantEvalArgs, RateArgs};

const EVAL_KEYS: [Key; 3] = [input("ckpt"), input("data"), input("baseline_train")];
const QUANT_KEYS: [Key; 5] = [input("ckpt"), input("data"), value("q_sa", "3"), value("q_sp", "3"), input("range_data")];
const RATE_KEYS: [Key; 6] = [
    input("ckpt"),
    input("data"),
    value("users", "4"),
    value("snr_grid", "-10,-5,0,5,10,15,20,25,30"),
    value("trials", "500"),
    value("seed", "0"),
];

fn channel_units(ds: &CsiDataset) -> Result<CsiDataset> {
    match ds.scaler {
        None => Ok(ds.clone()),
        Some(s) => Ok(invert_normalizer(ds, &s)?),
    }
}

/// A checkpoint applied to one dataset.
struct Evaluation {
    model: TrainedModel,
    normalized: CsiDataset,
    truth: Vec<CsiPair>,
}

impl Evaluation {
    fn open(s: &Settings) -> Result<Self> {
        let ckpt = s.input("ckpt")?;
        let model = TrainedModel::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
        let data = load(&s.input("data")?)?;
        let normalized = model.normalized(&data)?;
        let truth = match data.scaler {
            None => data.samples,
            Some(_) => model.channel_units(&normalized),
        };
        Ok(Evaluation {
            model,
            normalized,
            truth,
        })
    }

    fn recover(&self) -> Result<Vec<CsiPair>> {
        Ok(self.model.recover(&self.normalized.samples)?)
    }

    fn base_extra(&self) -> KvMap {
        let mut kv = KvMap::new();
        for key in ["epoch", "val_nmse_db"] {
            if let Some(v) = self.model.store.meta.get_str(key) {
                kv.set(&format!("checkpoint_{key}"), v);
            }
        }
        kv
    }
}

fn finish(s: &Settings, report: &EvalReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    emit_report(report, dir).with_context(|| format!("writing report to {}", dir.display()))?;
    s.write_manifest(dir, &KvMap::new())?;
    print!("{}", report.summary());
    Ok(())
}

pub fn eval(args: &EvalArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("ckpt", &args.ckpt).path("data", &args.data).path("baseline_train", &args.baseline_train);
    let s = Settings::resolve("eval", &EVAL_KEYS, file, f)?;
    let ev = Evaluation::open(&s)?;
    let mut report = EvalReport::from_recovery(&ev.recover()?, &ev.truth)?;
    report.gcs = Some(mean_profile(&ev.truth)?);
    report.params = Some(count_params_actual(&ev.model.net.config)?);
    report.extra = ev.base_extra();
    if let Some(path) = s.optional_input("baseline_train")? {
        let train = channel_units(&load(&path)?)?;
        let codec = linear_baseline(&train, ev.model.net.config.sigma)?;
        let pred = ev.truth.iter().map(|p| codec.roundtrip(p)).collect::<Result<Vec<_>, _>>()?;
        report.extra.set("baseline_rank", codec.rank());
        report.extra.set("baseline_nmse_db", nmse_db(&pred, &ev.truth)?);
    }
    finish(&s, &report, &args.report)
}

pub fn quant_eval(args: &QuantEvalArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("ckpt", &args.ckpt)
        .path("data", &args.data)
        .set("q_sa", &args.qsa)
        .set("q_sp", &args.qsp)
        .path("range_data", &args.range_data);
    let s = Settings::resolve("quant-eval", &QUANT_KEYS, file, f)?;
    let ev = Evaluation::open(&s)?;
    let range_set = match s.optional_input("range_data")? {
        Some(p) => ev.model.normalized(&load(&p)?)?,
        None => ev.normalized.clone(),
    };
    let qcfg = QuantConfig::fit(s.get("q_sa")?, s.get("q_sp")?, &ev.model.latents(&range_set.samples)?)?;
    let out = ev.model.recover_quantized(&ev.normalized.samples, &qcfg)?;
    let mut report = EvalReport::from_recovery(&out.recovered, &ev.truth)?;
    report.bits.push(out.bits);
    report.extra = ev.base_extra();
    report.extra.set("nmse_unquantized_db", nmse_db(&ev.recover()?, &ev.truth)?);
    for (name, r) in ["w", "v", "h"].iter().zip(qcfg.ranges) {
        report.extra.set(&format!("range_{name}_lo"), r.lo);
        report.extra.set(&format!("range_{name}_hi"), r.hi);
    }
    finish(&s, &report, &args.report)
}

pub fn rate(args: &RateArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("ckpt", &args.ckpt)
        .path("data", &args.data)
        .set("users", &args.users)
        .set("snr_grid", &args.snr_grid)
        .set("trials", &args.trials)
        .set("seed", &args.seed);
    let s = Settings::resolve("rate", &RATE_KEYS, file, f)?;
    let grid: Vec<f64> = s.list("snr_grid")?;
    if grid.is_empty() {
        bail!("empty SNR grid");
    }
    let ev = Evaluation::open(&s)?;
    let pred = ev.recover()?;
    let table = RateTable::simulate(&ev.truth, &pred, s.get("users")?, &grid, s.get("trials")?, s.get("seed")?)?;
    let mut report = EvalReport::from_recovery(&pred, &ev.truth)?;
    report.extra = ev.base_extra();
    report.extra.set("rate_dominated_fraction", table.dominated_fraction());
    if let Some(slope) = table.high_snr_slope() {
        report.extra.set("rate_high_snr_slope", slope);
    }
    report.rates = Some(table);
    finish(&s, &report, &args.report)
}
