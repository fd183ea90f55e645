//! Deterministic file emission: every float is printed with 9 significant
//! digits so repeated runs diff byte-for-byte.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use speclease::{SgdStep, SweepRow};

/// 9-significant-digit scientific notation, e.g. `2.50000000e1`.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds to the printed precision so JSON numbers match the CSV contract.
pub fn round_sig9(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig9(x).parse().expect("round-trip of formatted float")
    } else {
        x
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 9] = [
    "sweep_value",
    "scheme",
    "n_r",
    "mean_n_s",
    "se_n_s",
    "mean_total_sc",
    "mean_cost_per_sc",
    "mean_surplus",
    "se_surplus",
];

pub fn sweep_row_record(row: &SweepRow) -> Vec<String> {
    vec![
        fmt_sig9(row.sweep_value),
        row.scheme.as_str().to_string(),
        fmt_sig9(row.n_r),
        fmt_sig9(row.mean_n_s),
        fmt_sig9(row.se_n_s),
        fmt_sig9(row.mean_total_sc),
        fmt_sig9(row.mean_cost_per_sc),
        fmt_sig9(row.mean_surplus),
        fmt_sig9(row.se_surplus),
    ]
}

/// Writes sweep.csv from raw string records (so resumed runs can splice in
/// previously computed rows unchanged).
pub fn write_sweep_csv(path: &Path, records: &[Vec<String>]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(SWEEP_HEADER)?;
    for record in records {
        writer.write_record(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_sgd_trace(path: &Path, trace: &[SgdStep]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(["iteration", "reservation", "gradient", "step_size"])?;
    for step in trace {
        writer.write_record([
            step.iteration.to_string(),
            fmt_sig9(step.reservation),
            fmt_sig9(step.gradient),
            fmt_sig9(step.step_size),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_nine_significant_digits() {
        assert_eq!(fmt_sig9(25.0), "2.50000000e1");
        assert_eq!(fmt_sig9(0.0), "0.00000000e0");
        assert_eq!(fmt_sig9(-1.3), "-1.30000000e0");
        assert_eq!(fmt_sig9(1.0 / 3.0), "3.33333333e-1");
    }

    #[test]
    fn rounding_matches_formatting() {
        let x = std::f64::consts::PI;
        let r = round_sig9(x);
        assert_eq!(fmt_sig9(r), fmt_sig9(x));
        assert_ne!(r, x);
        assert_eq!(round_sig9(0.0), 0.0);
    }
}
