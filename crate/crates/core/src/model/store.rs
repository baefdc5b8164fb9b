use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::nn::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DPCKPT1\n";

/// Names under this prefix hold mutual-information estimator tensors.
pub const ESTIMATOR_PREFIX: &str = "estimator.";

/// Learnable parameters, normalization buffers and optional estimator
/// tensors of one model, with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    pub config: ModelConfig,
    pub params: ParamSet<f32>,
    pub buffers: ParamSet<f32>,
    pub estimators: ParamSet<f32>,
    pub meta: KvMap,
    pub seed: u64,
    pub step: u64,
}

impl ParameterStore {
    pub fn new(config: ModelConfig, params: ParamSet<f32>, buffers: ParamSet<f32>, seed: u64) -> Self {
        ParameterStore {
            config,
            params,
            buffers,
            estimators: ParamSet::new(),
            meta: KvMap::new(),
            seed,
            step: 0,
        }
    }

    /// Total element count across parameters, buffers and estimators.
    pub fn element_count(&self) -> usize {
        self.params.len() + self.buffers.len() + self.estimators.len()
    }
}

fn push_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_set(buf: &mut Vec<u8>, set: &ParamSet<f32>, prefix: &str) -> Result<()> {
    for spec in set.specs() {
        let name = format!("{prefix}{}", spec.name);
        push_u32(buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        push_u32(buf, spec.shape.len())?;
        for &d in &spec.shape {
            push_u32(buf, d)?;
        }
        for v in &set.data()[spec.range()] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

pub fn write_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut kv = store.config.to_kv();
    kv.set("seed", store.seed);
    kv.set(
        "tensors",
        store.params.specs().len() + store.buffers.specs().len() + store.estimators.specs().len(),
    );
    for (k, v) in store.meta.iter() {
        kv.set(&format!("meta.{k}"), v);
    }
    let text = kv.to_string();
    let mut buf = Vec::with_capacity(64 + text.len() + 4 * store.element_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut buf, text.len())?;
    buf.extend_from_slice(text.as_bytes());
    push_set(&mut buf, &store.params, "")?;
    push_set(&mut buf, &store.buffers, "")?;
    push_set(&mut buf, &store.estimators, ESTIMATOR_PREFIX)?;
    buf.extend_from_slice(&store.step.to_le_bytes());
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Truncated {
                expected: self.at + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<ParameterStore> {
    let bytes = fs::read(path)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint file", path.display())));
    }
    let mut r = Reader { bytes: &bytes, at: 8 };
    let kv_len = r.u32()?;
    let text = std::str::from_utf8(r.take(kv_len)?)
        .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
    let kv: KvMap = text.parse()?;
    let config = ModelConfig::from_kv(&kv)?;
    let seed: u64 = kv.parse_req("seed")?;
    let count: usize = kv.parse_req("tensors")?;
    let mut meta = KvMap::new();
    for (k, v) in kv.iter() {
        if let Some(k) = k.strip_prefix("meta.") {
            meta.set(k, v);
        }
    }

    let net = Network::new(config.clone())?;
    let mut params = net.param_layout::<f32>();
    let mut buffers = net.buffer_layout::<f32>();
    let mut estimators = ParamSet::<f32>::new();
    let mut seen = vec![false; params.specs().len() + buffers.specs().len()];
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(4 * len)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let target = if let Some(rest) = name.strip_prefix(ESTIMATOR_PREFIX) {
            let id = estimators.register(rest, &shape);
            estimators.get_mut(id).copy_from_slice(&values);
            continue;
        } else if let Some(id) = params.find(&name) {
            (&mut params, id, id.index())
        } else if let Some(id) = buffers.find(&name) {
            let offset = params.specs().len();
            (&mut buffers, id, offset + id.index())
        } else {
            return Err(Error::Inconsistent(format!("unknown tensor {name} for model {config}")));
        };
        let (set, id, slot) = target;
        if set.spec(id).shape != shape {
            return Err(Error::Inconsistent(format!(
                "tensor {name} has shape {shape:?}, model expects {:?}",
                set.spec(id).shape
            )));
        }
        set.get_mut(id).copy_from_slice(&values);
        seen[slot] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let n = params.specs().len();
        let name = if missing < n {
            &params.specs()[missing].name
        } else {
            &buffers.specs()[missing - n].name
        };
        return Err(Error::Inconsistent(format!("checkpoint lacks tensor {name}")));
    }
    let step_bytes = r.take(8)?;
    let step = u64::from_le_bytes(step_bytes.try_into().expect("8 bytes"));
    if r.at != bytes.len() {
        return Err(Error::Inconsistent(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(ParameterStore {
        config,
        params,
        buffers,
        estimators,
        meta,
        seed,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParameterStore {
        let cfg = ModelConfig::new(8, 8, 4.0).unwrap().with_trunk(2, 1, 1).unwrap();
        let net = Network::new(cfg).unwrap();
        let mut s = net.init_params(11);
        s.buffers.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.5);
        let id = s.estimators.register("mi1.l0.weight", &[2, 3]);
        s.estimators.get_mut(id).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        s.meta.set("note", "x");
        s.step = 42;
        s
    }

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let s = store();
        write_checkpoint(&s, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn detects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&store(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }
}
