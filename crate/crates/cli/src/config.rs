//! Layered run configuration: built-in defaults, then an optional
//! `key = value` file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use dualpol_core::kv::KvMap;
use dualpol_core::rng::{derive_seed, Stream};

/// Prefix of informational manifest entries; ignored when a manifest is
/// read back as a config file.
pub const RUN_PREFIX: &str = "run.";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Value,
    /// Existing file, recorded as an absolute path.
    Input,
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub kind: KeyKind,
}

pub const fn value(name: &'static str, default: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
        kind: KeyKind::Value,
    }
}

#[cfg(test)]
pub const fn required(name: &'static str) -> Key {
    Key {
        name,
        default: None,
        kind: KeyKind::Value,
    }
}

pub const fn input(name: &'static str) -> Key {
    Key {
        name,
        default: None,
        kind: KeyKind::Input,
    }
}

/// Flag values that were given on the command line.
#[derive(Debug, Default)]
pub struct Flags(KvMap);

impl Flags {
    pub fn set<T: ToString>(&mut self, key: &str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.set(key, v.to_string());
        }
        self
    }

    /// Every entry of `kv` whose key is in `keys`.
    pub fn from_kv(kv: &KvMap, keys: &[Key]) -> Self {
        let mut f = Flags::default();
        for (k, v) in kv.iter() {
            if keys.iter().any(|key| key.name == k) {
                f.0.set(k, v);
            }
        }
        f
    }

    pub fn path(&mut self, key: &str, v: &Option<PathBuf>) -> &mut Self {
        if let Some(p) = v {
            self.0.set(key, p.display());
        }
        self
    }
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone)]
pub struct Settings {
    command: &'static str,
    values: KvMap,
}

fn read_file(path: &Path, keys: &[Key]) -> Result<KvMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let kv: KvMap = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let mut out = KvMap::new();
    for (k, v) in kv.iter() {
        if k.starts_with(RUN_PREFIX) {
            continue;
        }
        if !keys.iter().any(|key| key.name == k) {
            bail!("unknown key `{k}` in config {}", path.display());
        }
        out.set(k, v);
    }
    Ok(out)
}

impl Settings {
    pub fn resolve(command: &'static str, keys: &[Key], file: Option<&Path>, flags: Flags) -> Result<Self> {
        let mut values = KvMap::new();
        for k in keys {
            if let Some(d) = k.default {
                values.set(k.name, d);
            }
        }
        if let Some(path) = file {
            values.merge(&read_file(path, keys)?);
        }
        values.merge(&flags.0);
        let mut resolved = KvMap::new();
        for k in keys {
            let Some(v) = values.get_str(k.name) else {
                if k.kind == KeyKind::Input {
                    continue;
                }
                bail!("missing required setting `{}`", k.name);
            };
            if k.kind == KeyKind::Input && !v.is_empty() {
                let abs = fs::canonicalize(v).with_context(|| format!("{} file {v}", k.name))?;
                resolved.set(k.name, abs.display());
            } else {
                resolved.set(k.name, v);
            }
        }
        Ok(Settings {
            command,
            values: resolved,
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.values.get_str(key).ok_or_else(|| anyhow!("missing setting `{key}`"))?;
        raw.parse().map_err(|_| anyhow!("invalid value {raw:?} for `{key}`"))
    }

    /// `None` for an empty value.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get_str(key) {
            None | Some("") => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn input(&self, key: &str) -> Result<PathBuf> {
        self.optional_input(key)?.ok_or_else(|| anyhow!("missing required input `{key}`"))
    }

    pub fn optional_input(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.values.get_str(key).filter(|v| !v.is_empty()).map(PathBuf::from))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw: String = self.get(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| anyhow!("invalid entry {s:?} in `{key}`")))
            .collect()
    }

    pub fn values(&self) -> &KvMap {
        &self.values
    }

    /// Resolved settings plus run metadata, in the form read back by
    /// `--config`.
    pub fn manifest(&self, extra: &KvMap) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("run.command", self.command);
        kv.set("run.version", env!("CARGO_PKG_VERSION"));
        kv.merge(&self.values);
        for (k, v) in extra.iter() {
            kv.set(&format!("{RUN_PREFIX}{k}"), v);
        }
        kv
    }

    pub fn write_manifest(&self, dir: &Path, extra: &KvMap) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest(extra).to_string()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Every named sub-stream seed derived from a run seed.
pub fn seed_table(seed: u64) -> KvMap {
    let mut kv = KvMap::new();
    for (name, s) in [
        ("data", Stream::Data),
        ("init", Stream::Init),
        ("batching", Stream::Batching),
        ("estimator_init", Stream::EstimatorInit),
        ("evaluation", Stream::Evaluation),
    ] {
        kv.set(&format!("seed.{name}"), derive_seed(seed, s));
    }
    kv
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: [Key; 3] = [value("lr", "0.001"), value("epochs", "100"), required("sigma")];

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "# comment\nepochs = 5\nsigma = 8\nrun.command = train\n").unwrap();
        let mut flags = Flags::default();
        flags.set("sigma", &Some(16));
        let s = Settings::resolve("train", &KEYS, Some(&file), flags).unwrap();
        assert_eq!(s.get::<f64>("lr").unwrap(), 0.001);
        assert_eq!(s.get::<usize>("epochs").unwrap(), 5);
        assert_eq!(s.get::<f64>("sigma").unwrap(), 16.0);
    }

    #[test]
    fn unknown_file_keys_and_missing_values_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "sigma = 8\nlearning_rate = 1\n").unwrap();
        assert!(Settings::resolve("train", &KEYS, Some(&file), Flags::default()).is_err());
        assert!(Settings::resolve("train", &KEYS, None, Flags::default()).is_err());
    }

    #[test]
    fn manifest_reads_back_as_config() {
        let mut flags = Flags::default();
        flags.set("sigma", &Some(4));
        let s = Settings::resolve("train", &KEYS, None, flags).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = s.write_manifest(dir.path(), &seed_table(3)).unwrap();
        let back = Settings::resolve("train", &KEYS, Some(&path), Flags::default()).unwrap();
        assert_eq!(back.values(), s.values());
    }
}
