//! MAE, ICC(3,1) and confusion matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{io_err, write_json};

fn check_pair(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction/truth length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < min_len {
        return Err(Error::invalid(format!("need at least {min_len} samples, got {}", pred.len())));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// ICC(3,1) between two raters, from the two-way ANOVA without replication.
///
/// Returns `None` when the between-target and residual mean squares are
/// both zero (every rating identical up to a rater offset of zero spread).
pub fn icc31(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, truth, 2)?;
    let n = pred.len() as f64;
    let k = 2.0;
    let grand = (pred.iter().sum::<f64>() + truth.iter().sum::<f64>()) / (k * n);
    let mean_pred = pred.iter().sum::<f64>() / n;
    let mean_truth = truth.iter().sum::<f64>() / n;

    let mut ss_rows = 0.0;
    let mut ss_total = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let row_mean = (p + t) / k;
        ss_rows += k * (row_mean - grand).powi(2);
        ss_total += (p - grand).powi(2) + (t - grand).powi(2);
    }
    let ss_cols = n * ((mean_pred - grand).powi(2) + (mean_truth - grand).powi(2));
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);

    let bms = ss_rows / (n - 1.0);
    let ems = ss_err / ((n - 1.0) * (k - 1.0));
    let denom = bms + (k - 1.0) * ems;
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some(((bms - ems) / denom).clamp(-1.0, 1.0)))
}

/// `L x L` counts with rows indexed by truth and columns by prediction.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], num_labels: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction/truth length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut m = vec![vec![0u64; num_labels]; num_labels];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_labels || t >= num_labels {
            return Err(Error::invalid(format!(
                "label pair (truth {t}, pred {p}) outside [0, {num_labels})"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    /// `None` when undefined.
    pub icc31: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
    pub n: usize,
}

impl EvalReport {
    /// MAE and ICC on the real-valued predictions; the confusion matrix uses
    /// predictions rounded and clamped to `[0, num_labels - 1]`.
    pub fn from_predictions(pred: &[f64], truth: &[usize], num_labels: usize) -> Result<Self> {
        let truth_f: Vec<f64> = truth.iter().map(|&t| t as f64).collect();
        let mae = mae(pred, &truth_f)?;
        let icc31 = if pred.len() >= 2 { icc31(pred, &truth_f)? } else { None };
        let top = num_labels.saturating_sub(1) as f64;
        let rounded: Vec<usize> = pred.iter().map(|p| p.round().clamp(0.0, top) as usize).collect();
        let confusion = confusion_matrix(&rounded, truth, num_labels)?;
        Ok(EvalReport {
            mae,
            icc31,
            confusion,
            n: pred.len(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn save_confusion_csv(&self, path: &Path) -> Result<()> {
        write_confusion_csv(&self.confusion, path)
    }
}

/// Writes a confusion matrix with a `truth\pred` header row.
pub fn write_confusion_csv(confusion: &[Vec<u64>], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let mut out = String::from("truth\\pred");
    for j in 0..confusion.len() {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        out.push_str(&i.to_string());
        for c in row {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Sample mean and standard deviation (divisor `n - 1`, zero for `n = 1`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
