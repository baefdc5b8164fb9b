use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch,train_mse,train_mi_loss,val_nmse_db,mi_shared_nats,mi_cross_nats,wall_secs";

/// One completed epoch. Information estimates are taken on a fixed
/// validation probe batch with the model in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub train_mi_loss: f64,
    pub val_nmse_db: f64,
    pub mi_shared: f64,
    pub mi_cross: f64,
    pub wall_secs: f64,
}

impl EpochRecord {
    /// `|mi_shared - mi_cross|`, nats.
    pub fn mi_gap(&self) -> f64 {
        (self.mi_shared - self.mi_cross).abs()
    }

    fn same_values(&self, other: &EpochRecord) -> bool {
        self.epoch == other.epoch
            && [self.train_mse, self.train_mi_loss, self.val_nmse_db, self.mi_shared, self.mi_cross]
                .iter()
                .zip([other.train_mse, other.train_mi_loss, other.val_nmse_db, other.mi_shared, other.mi_cross])
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Record with the lowest validation NMSE.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().min_by(|a, b| a.val_nmse_db.total_cmp(&b.val_nmse_db))
    }

    /// Bitwise equality of every column except wall time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_values(b))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.train_mse, r.train_mi_loss, r.val_nmse_db, r.mi_shared, r.mi_cross, r.wall_secs
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(Error::Format("history table has an unexpected header".into()));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::Format(format!("history row {} has {} columns", i + 1, cols.len())));
            }
            let num = |j: usize| -> Result<f64> {
                cols[j]
                    .parse()
                    .map_err(|_| Error::Format(format!("history row {}: bad value {:?}", i + 1, cols[j])))
            };
            records.push(EpochRecord {
                epoch: cols[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("history row {}: bad epoch", i + 1)))?,
                train_mse: num(1)?,
                train_mi_loss: num(2)?,
                val_nmse_db: num(3)?,
                mi_shared: num(4)?,
                mi_cross: num(5)?,
                wall_secs: num(6)?,
            });
        }
        Ok(TrainHistory { records })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, nmse: f64, wall: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_mse: 0.1 / (epoch + 1) as f64,
            train_mi_loss: 3.25,
            val_nmse_db: nmse,
            mi_shared: 1.0 / 3.0,
            mi_cross: 0.2,
            wall_secs: wall,
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let h = TrainHistory {
            records: vec![rec(0, -3.3, 1.5), rec(1, -7.123456789012345, 3.0)],
        };
        let back = TrainHistory::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.best().unwrap().epoch, 1);
    }

    #[test]
    fn trajectory_comparison_ignores_wall_time_only() {
        let a = TrainHistory { records: vec![rec(0, -1.0, 1.0)] };
        let b = TrainHistory { records: vec![rec(0, -1.0, 9.0)] };
        let c = TrainHistory { records: vec![rec(0, -1.0 - 1e-15, 1.0)] };
        assert!(a.same_trajectory(&b));
        assert!(!a.same_trajectory(&c));
    }

    #[test]
    fn bad_header_and_rows_are_rejected() {
        assert!(TrainHistory::from_csv("epoch,x\n").is_err());
        assert!(TrainHistory::from_csv(&format!("{HISTORY_HEADER}\n1,2,3\n")).is_err());
        assert!(TrainHistory::from_csv(&format!("{HISTORY_HEADER}\n0,a,0,0,0,0,0\n")).is_err());
    }
}
