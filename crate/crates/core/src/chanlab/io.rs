//! DPCSI1 dataset files plus their `key=value` sidecar manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex32;

use super::{check_dims, CsiDataset, CsiMatrix, CsiPair, NormScaler, ScenarioConfig, GENERATOR_VERSION};
use crate::error::{Error, Result};
use crate::kv::KvMap;

pub const MAGIC: &[u8; 8] = b"DPCSI1\n\0";
const HEADER_LEN: usize = 8 + 4 * 4 + 2 * 8;
const FLAG_NORMALIZED: u32 = 1;

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn encode(dataset: &CsiDataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let entries = dataset.n_s * dataset.width();
    let mut buf = Vec::with_capacity(HEADER_LEN + dataset.len() * entries * 16);
    buf.extend_from_slice(MAGIC);
    let as_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Dimension(format!("{what} = {v} exceeds u32")));
    buf.extend_from_slice(&as_u32(dataset.n_s, "n_s")?.to_le_bytes());
    buf.extend_from_slice(&as_u32(dataset.n_t, "n_t")?.to_le_bytes());
    buf.extend_from_slice(&as_u32(dataset.len(), "sample count")?.to_le_bytes());
    let flags = if dataset.scaler.is_some() { FLAG_NORMALIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    let (lo, hi) = dataset.scaler.map_or((0.0, 0.0), |s| (s.lo, s.hi));
    buf.extend_from_slice(&lo.to_le_bytes());
    buf.extend_from_slice(&hi.to_le_bytes());
    for pair in &dataset.samples {
        for z in pair.h_v.as_slice().iter().chain(pair.h_h.as_slice()) {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(buf)
}

fn manifest_text(dataset: &CsiDataset) -> String {
    let s = &dataset.scenario;
    let mut kv = KvMap::new();
    kv.set("scenario", &s.name);
    kv.set("count", dataset.len());
    kv.set("n_s", dataset.n_s);
    kv.set("n_t", dataset.n_t);
    kv.set("kappa", s.kappa);
    kv.set("n_paths", s.n_paths);
    kv.set("delay_spread", s.delay_spread);
    kv.set("angle_spread", s.angle_spread);
    if let Some(t) = s.target_gcs {
        kv.set("target_gcs", t);
    }
    if let Some(seed) = dataset.seed {
        kv.set("seed", seed);
    }
    kv.set("generator_version", GENERATOR_VERSION);
    kv.to_string()
}

/// Writes the dataset and its `<path>.manifest` sidecar.
pub fn write_dataset(dataset: &CsiDataset, path: &Path) -> Result<()> {
    let bytes = encode(dataset)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    fs::write(manifest_path(path), manifest_text(dataset))?;
    Ok(())
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn decode(bytes: &[u8], scenario: ScenarioConfig) -> Result<CsiDataset> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing DPCSI1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let n_s = u32_at(bytes, 8) as usize;
    let n_t = u32_at(bytes, 12) as usize;
    let count = u32_at(bytes, 16) as usize;
    let flags = u32_at(bytes, 20);
    let lo = f64_at(bytes, 24);
    let hi = f64_at(bytes, 32);
    check_dims(n_s, n_t).map_err(|e| Error::Inconsistent(e.to_string()))?;
    if flags & !FLAG_NORMALIZED != 0 {
        return Err(Error::Inconsistent(format!("unknown flag bits {flags:#x}")));
    }
    let scaler = if flags & FLAG_NORMALIZED != 0 {
        Some(NormScaler::new(lo, hi).map_err(|e| Error::Inconsistent(e.to_string()))?)
    } else {
        None
    };

    let width = n_t / 2;
    let per_matrix = n_s * width;
    let sample_bytes = 2 * per_matrix * 8;
    let expected = count
        .checked_mul(sample_bytes)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Inconsistent("header sizes overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Inconsistent(format!(
            "{} trailing bytes after {count} samples",
            bytes.len() - expected
        )));
    }

    let mut samples = Vec::with_capacity(count);
    let mut at = HEADER_LEN;
    let read_matrix = |at: &mut usize| -> Result<CsiMatrix> {
        let data: Vec<Complex32> = (0..per_matrix)
            .map(|i| {
                let o = *at + 8 * i;
                Complex32::new(f32_at(bytes, o), f32_at(bytes, o + 4))
            })
            .collect();
        *at += per_matrix * 8;
        CsiMatrix::from_vec(n_s, width, data)
    };
    for i in 0..count {
        let h_v = read_matrix(&mut at)?;
        let h_h = read_matrix(&mut at)?;
        let pair = CsiPair::new(h_v, h_h).map_err(|e| Error::Inconsistent(format!("sample {i}: {e}")))?;
        samples.push(pair);
    }
    Ok(CsiDataset {
        n_s,
        n_t,
        samples,
        scenario,
        scaler,
        seed: None,
    })
}

fn scenario_from_manifest(kv: &KvMap) -> Result<(ScenarioConfig, Option<u64>)> {
    let scenario = ScenarioConfig {
        name: kv.get_str("scenario").unwrap_or("unknown").to_string(),
        n_paths: kv.parse_or("n_paths", 1)?,
        kappa: kv.parse_or("kappa", 1.0)?,
        delay_spread: kv.parse_or("delay_spread", 1.0)?,
        angle_spread: kv.parse_or("angle_spread", 0.0)?,
        target_gcs: kv.parse_opt("target_gcs")?,
    };
    Ok((scenario, kv.parse_opt("seed")?))
}

/// Reads a dataset file. The sidecar manifest is optional; without it the
/// scenario metadata is reported as `unknown`.
pub fn read_dataset(path: &Path) -> Result<CsiDataset> {
    let bytes = fs::read(path)?;
    let mpath = manifest_path(path);
    let (scenario, seed) = if mpath.exists() {
        let kv: KvMap = fs::read_to_string(&mpath)?.parse()?;
        scenario_from_manifest(&kv)?
    } else {
        scenario_from_manifest(&KvMap::new())?
    };
    let mut ds = decode(&bytes, scenario)?;
    ds.seed = seed;
    Ok(ds)
}
