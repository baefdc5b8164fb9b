mod data;
mod eval;
mod info;
mod train;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dualpol_core::chanlab::{read_dataset, CsiDataset};

pub use data::{gen_data, inspect_gcs};
pub use eval::{eval, quant_eval, rate};
pub use info::{bits, gradcheck, params};
pub use train::{sweep_mi, train};

fn load(path: &Path) -> Result<CsiDataset> {
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
