use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{nmse_cdf, nmse_linear, to_db};
use super::precode::RateTable;
use crate::chanlab::{CsiPair, GcsProfile};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::ParamBreakdown;
use crate::quant::BitReport;

/// Everything an evaluation run reports. Optional parts are written only
/// when present.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub per_sample_db: Vec<f64>,
    /// Sample-averaged linear NMSE in dB.
    pub nmse_db: f64,
    pub cdf: Vec<(f64, f64)>,
    /// Mean and standard deviation of the reference data's GCS views.
    pub gcs: Option<(GcsProfile, GcsProfile)>,
    pub bits: Vec<BitReport>,
    pub params: Option<ParamBreakdown>,
    pub rates: Option<RateTable>,
    /// Extra summary entries, e.g. checkpoint and data paths.
    pub extra: KvMap,
}

impl EvalReport {
    /// Per-sample and aggregate NMSE plus the CDF, in channel units.
    pub fn from_recovery(pred: &[CsiPair], truth: &[CsiPair]) -> Result<Self> {
        if pred.len() != truth.len() || truth.is_empty() {
            return Err(Error::Dimension(format!("{} recovered vs {} reference samples", pred.len(), truth.len())));
        }
        let linear: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| nmse_linear(p, t)).collect();
        let per_sample_db: Vec<f64> = linear.iter().map(|&l| to_db(l)).collect();
        Ok(EvalReport {
            nmse_db: to_db(linear.iter().sum::<f64>() / linear.len() as f64),
            cdf: nmse_cdf(&per_sample_db),
            per_sample_db,
            ..EvalReport::default()
        })
    }

    pub fn summary(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("samples", self.per_sample_db.len());
        kv.set("nmse_db", self.nmse_db);
        if let Some(median) = super::cdf_quantile(&self.cdf, 0.5) {
            kv.set("nmse_median_db", median);
        }
        if let Some((mean, _)) = &self.gcs {
            for (label, v) in GcsProfile::LABELS.iter().zip(mean.as_array()) {
                kv.set(&format!("gcs_{label}"), v);
            }
        }
        for b in &self.bits {
            kv.set(&format!("bits_nominal_{}_{}", b.q_sa, b.q_sp), b.nominal);
            kv.set(&format!("bits_actual_{}_{}", b.q_sa, b.q_sp), b.actual);
        }
        if let Some(p) = &self.params {
            kv.set("params_total", p.total());
        }
        if let Some(r) = &self.rates {
            kv.set("rate_users", r.users);
            kv.set("rate_trials", r.trials);
            kv.set("rate_regularized_uses", r.regularized);
        }
        kv.merge(&self.extra);
        kv
    }
}

fn write(dir: &Path, name: &str, text: String, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    out.push(path);
    Ok(())
}

/// Writes the report's tables under `dir` and returns the files written.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    write(dir, "summary.txt", report.summary().to_string(), &mut out)?;

    let mut s = String::from("sample,nmse_db\n");
    for (i, v) in report.per_sample_db.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    write(dir, "nmse_per_sample.csv", s, &mut out)?;

    let mut s = String::from("nmse_db,fraction\n");
    for (v, f) in &report.cdf {
        s.push_str(&format!("{v},{f}\n"));
    }
    write(dir, "nmse_cdf.csv", s, &mut out)?;

    if let Some((mean, std)) = &report.gcs {
        let mut s = String::from("view,mean,std\n");
        for ((label, m), sd) in GcsProfile::LABELS.iter().zip(mean.as_array()).zip(std.as_array()) {
            s.push_str(&format!("{label},{m},{sd}\n"));
        }
        write(dir, "gcs.csv", s, &mut out)?;
    }
    if !report.bits.is_empty() {
        let mut s = String::from("q_sa,q_sp,nominal_bits,actual_bits\n");
        for b in &report.bits {
            s.push_str(&format!("{},{},{},{}\n", b.q_sa, b.q_sp, b.nominal, b.actual));
        }
        write(dir, "bits.csv", s, &mut out)?;
    }
    if let Some(p) = &report.params {
        let s = format!(
            "part,count\nencoder_fc,{}\ndecoder_fc,{}\nencoder_conv,{}\ndecoder_conv,{}\ntotal,{}\n",
            p.encoder_fc,
            p.decoder_fc,
            p.encoder_conv,
            p.decoder_conv,
            p.total()
        );
        write(dir, "params.csv", s, &mut out)?;
    }
    if let Some(r) = &report.rates {
        write(dir, "rate.csv", r.to_csv(), &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanlab::{generate_dataset, ScenarioConfig};

    #[test]
    fn report_files_are_consistent() {
        let ds = generate_dataset(&ScenarioConfig::cdl_a_like(), 6, 4, 8, 1).unwrap();
        let pred: Vec<CsiPair> = ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = 1.0 - 0.05 * i as f32;
                CsiPair {
                    h_v: p.h_v.map(|z| z * s),
                    h_h: p.h_h.map(|z| z * s),
                }
            })
            .collect();
        let mut rep = EvalReport::from_recovery(&pred, &ds.samples).unwrap();
        rep.bits.push(BitReport::new(32, 32, 8.0, 85, 3, 3));
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&rep, dir.path()).unwrap();
        assert_eq!(files.len(), 4);

        let cdf = fs::read_to_string(dir.path().join("nmse_cdf.csv")).unwrap();
        let fracs: Vec<f64> = cdf.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(fracs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*fracs.last().unwrap(), 1.0);

        // Sample 0 is exact, so it sits at the floor.
        assert_eq!(rep.per_sample_db[0], -120.0);
        let mean_lin = rep.per_sample_db.iter().map(|d| 10f64.powf(d / 10.0)).sum::<f64>() / 6.0;
        assert!((to_db(mean_lin) - rep.nmse_db).abs() < 1e-9);

        let summary: KvMap = fs::read_to_string(dir.path().join("summary.txt")).unwrap().parse().unwrap();
        assert_eq!(summary.parse_req::<f64>("bits_nominal_3_3").unwrap(), 768.0);
        assert_eq!(summary.parse_req::<u64>("bits_actual_3_3").unwrap(), 765);
    }
}
