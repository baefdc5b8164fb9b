use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dualpol_core::miest::{bits_to_nats, nats_to_bits};
use dualpol_core::model::ModelConfig;
use dualpol_core::trainer::{fit_with, normalize_split, FitOutcome, FitSink, TrainConfig};

use super::{create_dir, load};
use crate::config::{input, seed_table, value, Flags, Key, Settings, MANIFEST_FILE};
use crate::{SweepArgs, TrainArgs, TrainFlags};

const TRAIN_KEYS: [Key; 16] = [
    input("data"),
    input("val"),
    value("sigma", "8"),
    value("epochs", "100"),
    value("batch", "200"),
    value("lr", "0.001"),
    value("lambda", "0.00001"),
    value("mi_target_bits", "0"),
    value("seed", "0"),
    value("channels", "16"),
    value("depth", "3"),
    value("width", "5"),
    value("clip_norm", "5"),
    value("checkpoint_every", "10"),
    value("estimator_hidden", "128"),
    value("quiet", "false"),
];

fn sweep_keys() -> Vec<Key> {
    let mut keys: Vec<Key> = TRAIN_KEYS.iter().copied().filter(|k| k.name != "mi_target_bits").collect();
    keys.push(value("targets", "0,0.5,1,2"));
    keys
}

fn common_flags(a: &TrainFlags) -> Flags {
    let mut f = Flags::default();
    f.path("data", &a.data)
        .path("val", &a.val)
        .set("sigma", &a.sigma)
        .set("epochs", &a.epochs)
        .set("batch", &a.batch)
        .set("lr", &a.lr)
        .set("lambda", &a.lambda)
        .set("seed", &a.seed)
        .set("channels", &a.channels)
        .set("depth", &a.depth)
        .set("width", &a.width)
        .set("clip_norm", &a.clip_norm)
        .set("checkpoint_every", &a.checkpoint_every)
        .set("estimator_hidden", &a.estimator_hidden);
    if a.quiet {
        f.set("quiet", &Some(true));
    }
    f
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.join(MANIFEST_FILE).exists() {
        bail!("{} already holds a run; choose a new output directory", dir.display());
    }
    create_dir(dir)
}

/// Trains one model as described by resolved `train` settings.
fn run(s: &Settings, out: &Path) -> Result<FitOutcome> {
    let (train_path, val_path) = (s.input("data")?, s.input("val")?);
    let (train, val) = normalize_split(&load(&train_path)?, &load(&val_path)?)?;
    let model = ModelConfig::new(train.n_s, train.n_t, s.get("sigma")?)?.with_trunk(
        s.get("channels")?,
        s.get("depth")?,
        s.get("width")?,
    )?;
    let cfg = TrainConfig {
        lr: s.get("lr")?,
        lambda: s.get("lambda")?,
        mi_target: bits_to_nats(s.get("mi_target_bits")?),
        epochs: s.get("epochs")?,
        batch: s.get("batch")?,
        seed: s.get("seed")?,
        clip_norm: s.get("clip_norm")?,
        checkpoint_every: s.get("checkpoint_every")?,
        estimator_hidden: s.get("estimator_hidden")?,
    };
    cfg.validate()?;
    let quiet: bool = s.get("quiet")?;

    fresh_dir(out)?;
    let mut extra = seed_table(cfg.seed);
    extra.set("train_samples", train.len());
    extra.set("val_samples", val.len());
    extra.set("latent_len", model.latent_len);
    let scaler = train.scaler.expect("normalized by normalize_split");
    extra.set("norm.lo", scaler.lo);
    extra.set("norm.hi", scaler.hi);
    s.write_manifest(out, &extra)?;

    let sink = FitSink {
        out_dir: Some(out.to_path_buf()),
        on_epoch: (!quiet).then(|| {
            Box::new(|r: &dualpol_core::trainer::EpochRecord| {
                println!(
                    "epoch {:>3}  train_mse {:.6}  val_nmse {:+.3} dB  mi_shared {:.4}  mi_cross {:.4}  {:.0}s",
                    r.epoch, r.train_mse, r.val_nmse_db, r.mi_shared, r.mi_cross, r.wall_secs
                );
            }) as Box<dyn FnMut(&_)>
        }),
    };
    let outcome = fit_with(&train, &val, &model, &cfg, sink).context("training")?;
    if let Some(best) = outcome.best_epoch {
        let r = &outcome.history.records[best];
        println!("best epoch {best}: val_nmse {:.3} dB", r.val_nmse_db);
    }
    Ok(outcome)
}

pub fn train(args: &TrainArgs, file: Option<&Path>) -> Result<()> {
    let mut f = common_flags(&args.common);
    f.set("mi_target_bits", &args.mi_target_bits);
    let s = Settings::resolve("train", &TRAIN_KEYS, file, f)?;
    run(&s, &args.out).map(|_| ())
}

pub fn sweep_mi(args: &SweepArgs, file: Option<&Path>) -> Result<()> {
    let keys = sweep_keys();
    let mut f = common_flags(&args.common);
    f.set("targets", &args.targets);
    let s = Settings::resolve("sweep-mi", &keys, file, f)?;
    let targets: Vec<f64> = s.list("targets")?;
    if targets.is_empty() {
        bail!("no information targets given");
    }
    s.input("data")?;
    s.input("val")?;
    fresh_dir(&args.out)?;
    s.write_manifest(&args.out, &seed_table(s.get("seed")?))?;

    let mut table = String::from("target_bits,best_epoch,best_val_nmse_db,mi_shared_bits,mi_cross_bits,mi_distance_bits\n");
    for t in targets {
        let mut sub = Flags::from_kv(s.values(), &TRAIN_KEYS);
        sub.set("mi_target_bits", &Some(t));
        let sub = Settings::resolve("train", &TRAIN_KEYS, None, sub)?;
        let dir = args.out.join(format!("target_{t}bits"));
        println!("target {t} bits -> {}", dir.display());
        let outcome = run(&sub, &dir)?;
        let Some(best) = outcome.best_epoch else {
            continue;
        };
        let r = &outcome.history.records[best];
        table.push_str(&format!(
            "{t},{best},{},{},{},{}\n",
            r.val_nmse_db,
            nats_to_bits(r.mi_shared),
            nats_to_bits(r.mi_cross),
            nats_to_bits(r.mi_gap().abs())
        ));
    }
    let path = args.out.join("sweep.csv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{table}");
    Ok(())
}
