use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dualpol_core::chanlab::{generate_dataset, mean_profile, write_dataset, GcsProfile, ScenarioConfig, GENERATOR_VERSION};
use dualpol_core::kv::KvMap;

use super::{create_dir, load};
use crate::config::{input, value, Flags, Key, Settings};
use crate::{GenDataArgs, InspectArgs};

/// Empty scenario values keep the preset's.
const GEN_KEYS: [Key; 11] = [
    value("scenario", "cdl-a"),
    value("count", "1000"),
    value("n_s", "32"),
    value("n_t", "32"),
    value("seed", "0"),
    value("kappa", ""),
    value("n_paths", ""),
    value("delay_spread", ""),
    value("angle_spread", ""),
    value("target_gcs", ""),
    value("generator_version", GENERATOR_VERSION),
];

const INSPECT_KEYS: [Key; 1] = [input("data")];

fn scenario(s: &Settings) -> Result<ScenarioConfig> {
    let name: String = s.get("scenario")?;
    let mut sc = ScenarioConfig::preset(&name).ok_or_else(|| anyhow!("unknown scenario {name:?}"))?;
    if let Some(k) = s.optional("kappa")? {
        sc.kappa = k;
    }
    if let Some(p) = s.optional("n_paths")? {
        sc.n_paths = p;
    }
    if let Some(d) = s.optional("delay_spread")? {
        sc.delay_spread = d;
    }
    if let Some(a) = s.optional("angle_spread")? {
        sc.angle_spread = a;
    }
    if let Some(t) = s.optional("target_gcs")? {
        sc.target_gcs = Some(t);
    }
    sc.validate()?;
    Ok(sc)
}

pub fn gen_data(args: &GenDataArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.set("scenario", &args.scenario)
        .set("count", &args.count)
        .set("n_s", &args.ns)
        .set("n_t", &args.nt)
        .set("seed", &args.seed)
        .set("kappa", &args.kappa)
        .set("n_paths", &args.paths)
        .set("delay_spread", &args.delay_spread)
        .set("angle_spread", &args.angle_spread);
    let s = Settings::resolve("gen-data", &GEN_KEYS, file, f)?;
    let version: String = s.get("generator_version")?;
    if version != GENERATOR_VERSION {
        bail!("config asks for generator {version:?}, this build has {GENERATOR_VERSION:?}");
    }
    let sc = scenario(&s)?;
    let ds = generate_dataset(&sc, s.get("count")?, s.get("n_s")?, s.get("n_t")?, s.get("seed")?)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_dataset(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} samples ({}x{}, scenario {}) to {}",
        ds.len(),
        ds.n_s,
        ds.n_t,
        sc.name,
        args.out.display()
    );
    Ok(())
}

fn gcs_table(mean: &GcsProfile, std: &GcsProfile) -> String {
    let mut out = String::from("view,mean,std\n");
    for ((label, m), sd) in GcsProfile::LABELS.iter().zip(mean.as_array()).zip(std.as_array()) {
        out.push_str(&format!("{label},{m:.6},{sd:.6}\n"));
    }
    out
}

pub fn inspect_gcs(args: &InspectArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("data", &args.data);
    let s = Settings::resolve("inspect-gcs", &INSPECT_KEYS, file, f)?;
    let ds = load(&s.input("data")?)?;
    if ds.scaler.is_some() {
        bail!("GCS is defined on channel-unit data; this dataset is normalized");
    }
    let (mean, std) = mean_profile(&ds.samples)?;
    let table = gcs_table(&mean, &std);
    print!("{table}");
    if let Some(dir) = &args.report {
        create_dir(dir)?;
        fs::write(dir.join("gcs.csv"), &table)?;
        let mut extra = KvMap::new();
        extra.set("samples", ds.len());
        extra.set("scenario", &ds.scenario.name);
        s.write_manifest(dir, &extra)?;
    }
    Ok(())
}
