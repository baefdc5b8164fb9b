use std::path::Path;

use anyhow::{bail, Result};
use dualpol_core::model::{count_fc_params, count_params_actual, latent_length, sigma_ratio, ModelConfig};
use dualpol_core::quant::BitReport;
use dualpol_core::trainer::{finite_diff_gradcheck, tiny_config, GradcheckOptions};
use num_rational::Ratio;

use crate::config::{value, Flags, Key, Settings};
use crate::{BitsArgs, GradcheckArgs, ParamsArgs};

const BITS_KEYS: [Key; 5] = [
    value("n_s", "32"),
    value("n_t", "32"),
    value("sigma", "8"),
    value("q_sa", "3"),
    value("q_sp", "3"),
];

const PARAMS_KEYS: [Key; 6] = [
    value("n_s", "32"),
    value("n_t", "32"),
    value("sigma", "8"),
    value("channels", "16"),
    value("depth", "3"),
    value("width", "5"),
];

const GRADCHECK_KEYS: [Key; 1] = [value("seed", "0")];

pub fn bits(args: &BitsArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.set("n_s", &args.ns)
        .set("n_t", &args.nt)
        .set("sigma", &args.sigma)
        .set("q_sa", &args.qsa)
        .set("q_sp", &args.qsp);
    let s = Settings::resolve("bits", &BITS_KEYS, file, f)?;
    let (n_s, n_t, sigma) = (s.get("n_s")?, s.get("n_t")?, s.get("sigma")?);
    let m = latent_length(n_s, n_t, sigma)?;
    let r = BitReport::new(n_s, n_t, sigma, m, s.get("q_sa")?, s.get("q_sp")?);
    println!("latent_len={m}");
    println!("nominal_bits={}", r.nominal);
    println!("actual_bits={}", r.actual);
    Ok(())
}

fn show(r: Ratio<i128>) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn params(args: &ParamsArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.set("n_s", &args.ns)
        .set("n_t", &args.nt)
        .set("sigma", &args.sigma)
        .set("channels", &args.channels)
        .set("depth", &args.depth)
        .set("width", &args.width);
    let s = Settings::resolve("params", &PARAMS_KEYS, file, f)?;
    let (n_s, n_t, sigma): (u64, u64, f64) = (s.get("n_s")?, s.get("n_t")?, s.get("sigma")?);
    let c = count_fc_params(n_s, n_t, sigma_ratio(sigma)?);
    println!("P0={}", show(c.baseline));
    println!("P1={}", show(c.encoder));
    println!("P2={}", show(c.decoder));
    println!("P1/P0={}", show(c.encoder / c.baseline));
    println!("P2/P0={}", show(c.decoder / c.baseline));

    let model = ModelConfig::new(n_s as usize, n_t as usize, sigma)?.with_trunk(
        s.get("channels")?,
        s.get("depth")?,
        s.get("width")?,
    )?;
    let p = count_params_actual(&model)?;
    println!("encoder_fc={}", p.encoder_fc);
    println!("decoder_fc={}", p.decoder_fc);
    println!("encoder_conv={}", p.encoder_conv);
    println!("decoder_conv={}", p.decoder_conv);
    println!("total={}", p.total());
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs, file: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.set("seed", &args.seed);
    let s = Settings::resolve("gradcheck", &GRADCHECK_KEYS, file, f)?;
    let opts = GradcheckOptions {
        seed: s.get("seed")?,
        ..GradcheckOptions::default()
    };
    let report = finite_diff_gradcheck(&tiny_config(), &opts)?;
    print!("{report}");
    if !report.passed() {
        bail!("gradient check failed in {} group(s)", report.failures().len());
    }
    Ok(())
}
