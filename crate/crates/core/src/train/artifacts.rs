//! Plain-text renderings of training results. Numbers are printed in their
//! shortest round-trip form, so equal results give equal bytes.

use super::{AblationRow, CvReport, EpochLog};
use crate::data::PreparedSample;
use std::fmt::Write;

pub fn loss_csv(curve: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_mse,val_mse\n");
    for e in curve {
        let val = e.val_mse.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_mse, val);
    }
    s
}

/// Parses the output of [`loss_csv`] back into epoch logs.
pub fn parse_loss_csv(text: &str) -> Result<Vec<EpochLog>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,train_mse,val_mse") {
        return Err("not a loss log: unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("loss log line {}: {line:?}", i + 2);
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(EpochLog {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_mse: f[1].parse().map_err(|_| bad())?,
                val_mse: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().map_err(|_| bad())?)
                },
            })
        })
        .collect()
}

/// Fold table: one row per fold and a final `mean` row, with a train/val
/// column pair per run.
pub fn cv_csv(report: &CvReport) -> String {
    let mut s = String::from("fold");
    for r in &report.runs {
        let tag = if r.regularized { "regularized" } else { "unregularized" };
        let _ = write!(s, ",train_mse_{tag},val_mse_{tag}");
    }
    s.push('\n');
    for row in report.rows() {
        match row.fold {
            Some(k) => s.push_str(&k.to_string()),
            None => s.push_str("mean"),
        }
        for (t, v) in row.values {
            let _ = write!(s, ",{t},{v}");
        }
        s.push('\n');
    }
    s
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("setting,label,train_mse,val_mse,test_mse\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.setting.key(),
            r.setting.label(),
            r.train_mse,
            r.val_mse,
            r.test_mse
        );
    }
    s
}

/// Long-format forecasts: one line per sample and slot.
pub fn predictions_csv(samples: &[&PreparedSample], predictions: &[Vec<f64>]) -> String {
    let mut s = String::from("sample,station,date,slot,actual,predicted\n");
    for (i, (sample, pred)) in samples.iter().zip(predictions).enumerate() {
        for (slot, (a, p)) in sample.target.iter().zip(pred).enumerate() {
            let _ = writeln!(s, "{i},{},{},{slot},{a},{p}", sample.station_id, sample.date);
        }
    }
    s
}
