use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

/// Running sums for speed metrics pooled over many samples.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpeedAccumulator {
    abs: f64,
    sq: f64,
    pct: f64,
    n: usize,
}

impl SpeedAccumulator {
    pub fn add(&mut self, pred: &[f64], truth: &[f64], mask: &[f64]) -> Result<()> {
        if pred.len() != truth.len() || pred.len() != mask.len() {
            return Err(EvalError::Shape(format!(
                "pred {}, truth {}, mask {}",
                pred.len(),
                truth.len(),
                mask.len()
            )));
        }
        for i in 0..mask.len() {
            if mask[i] != 1.0 {
                continue;
            }
            if !(truth[i] > 0.0) {
                return Err(EvalError::InvalidInput(format!("truth speed {} at masked cell {i}", truth[i])));
            }
            let e = pred[i] - truth[i];
            self.abs += e.abs();
            self.sq += e * e;
            self.pct += e.abs() / truth[i];
            self.n += 1;
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn finish(&self) -> Result<SpeedMetrics> {
        if self.n == 0 {
            return Err(EvalError::EmptyMask);
        }
        let n = self.n as f64;
        Ok(SpeedMetrics { mae: self.abs / n, rmse: (self.sq / n).sqrt(), mape: 100.0 * self.pct / n })
    }
}

/// MAE, RMSE and MAPE (percent) over cells with `mask == 1`.
pub fn speed_metrics(pred: &[f64], truth: &[f64], mask: &[f64]) -> Result<SpeedMetrics> {
    let mut acc = SpeedAccumulator::default();
    acc.add(pred, truth, mask)?;
    acc.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// No positive labels: recall reported as 0.
    pub recall_degenerate: bool,
    /// No positive predictions: precision reported as 0.
    pub precision_degenerate: bool,
    /// Precision + recall = 0: F1 reported as 0.
    pub f1_degenerate: bool,
}

impl ClassificationMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (recall, recall_degenerate) = ratio(tp, tp + fn_);
        let (precision, precision_degenerate) = ratio(tp, tp + fp);
        let (f1, f1_degenerate) = if recall + precision > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        Self { recall, precision, f1, tp, fp, fn_, tn, recall_degenerate, precision_degenerate, f1_degenerate }
    }
}

/// A sample is predicted positive when `p >= threshold`.
pub fn classification_metrics(p_incident: &[f64], labels: &[u8], threshold: f64) -> Result<ClassificationMetrics> {
    if p_incident.is_empty() {
        return Err(EvalError::InvalidInput("no predictions".into()));
    }
    if p_incident.len() != labels.len() {
        return Err(EvalError::Shape(format!("{} predictions, {} labels", p_incident.len(), labels.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in p_incident.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ClassificationMetrics::from_counts(tp, fp, fn_, tn))
}

/// `100 * (baseline - model) / baseline`.
pub fn relative_improvement(baseline: f64, model: f64) -> Result<f64> {
    if !(baseline > 0.0) || !model.is_finite() {
        return Err(EvalError::InvalidInput(format!("baseline metric must be > 0, got {baseline}")));
    }
    Ok(100.0 * (baseline - model) / baseline)
}
