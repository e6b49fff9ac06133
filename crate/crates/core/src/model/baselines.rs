use serde::{Deserialize, Serialize};

use super::{ModelError, PredictionOutput, Result};
use crate::spacetime::Sample;

/// Predicts the historical speed image and the training incident rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricalAverage {
    pub incident_rate: f64,
}

impl HistoricalAverage {
    pub fn fit(train: &[&Sample]) -> Result<Self> {
        if train.is_empty() {
            return Err(ModelError::Input("historical-average baseline needs training samples".into()));
        }
        let pos = train.iter().filter(|s| s.y_incident == 1).count();
        Ok(Self { incident_rate: pos as f64 / train.len() as f64 })
    }

    pub fn predict(&self, sample: &Sample) -> PredictionOutput {
        PredictionOutput {
            y_speed_hat: sample.historical(),
            p_incident: [1.0 - self.incident_rate, self.incident_rate],
        }
    }
}

/// Solves `a x = b` for a small dense system by Gaussian elimination with
/// partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Normal-equation accumulator for `y = c0 + c . x`.
#[derive(Clone, Debug)]
struct Normal {
    xtx: Vec<Vec<f64>>,
    xty: Vec<f64>,
    rows: usize,
}

impl Normal {
    fn new(dim: usize) -> Self {
        Self { xtx: vec![vec![0.0; dim]; dim], xty: vec![0.0; dim], rows: 0 }
    }

    fn add(&mut self, x: &[f64], y: f64) {
        for i in 0..x.len() {
            for j in 0..x.len() {
                self.xtx[i][j] += x[i] * x[j];
            }
            self.xty[i] += x[i] * y;
        }
        self.rows += 1;
    }

    fn merge(&mut self, other: &Normal) {
        for i in 0..self.xty.len() {
            for j in 0..self.xty.len() {
                self.xtx[i][j] += other.xtx[i][j];
            }
            self.xty[i] += other.xty[i];
        }
        self.rows += other.rows;
    }

    /// Ridge solution penalising every coefficient but the intercept (index 0).
    fn ridge(&self, lambda: f64) -> Option<Vec<f64>> {
        let mut a = self.xtx.clone();
        for (i, row) in a.iter_mut().enumerate().skip(1) {
            row[i] += lambda;
        }
        solve(a, self.xty.clone())
    }
}

/// Per-link autoregressive model of order `k` on actual speeds (mph).
///
/// Each link row `r` of the canvas has its own `[intercept, a_1 .. a_k]`,
/// where `a_j` multiplies the value `j` bins back. Rows with no training
/// data use coefficients pooled over all rows. Prediction seeds the first
/// `k` bins with the historical speed and rolls forward on its own output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearAr {
    pub lookback: usize,
    pub ridge: f64,
    pub speed_max: f64,
    pub coefficients: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    /// Logistic weights on `[1, lanes_closed, duration]` (normalised features).
    pub logistic: [f64; 3],
}

pub const AR_LOOKBACK: usize = 4;
pub const AR_RIDGE: f64 = 1.0;

fn lags(series: &[f64], t: usize, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(k + 1);
    x.push(1.0);
    x.extend((1..=k).map(|j| series[t - j]));
    x
}

impl LinearAr {
    pub fn fit(train: &[&Sample], lookback: usize, ridge: f64, speed_max: f64) -> Result<Self> {
        if train.is_empty() {
            return Err(ModelError::Input("linear AR baseline needs training samples".into()));
        }
        if lookback == 0 {
            return Err(ModelError::Config("AR lookback must be >= 1".into()));
        }
        let height = train[0].height();
        let mut per_row: Vec<Normal> = (0..height).map(|_| Normal::new(lookback + 1)).collect();
        for s in train {
            let w = s.width();
            for (r, normal) in per_row.iter_mut().enumerate().take(s.links) {
                let series: Vec<f64> = (0..s.bins).map(|t| s.y_speed[r * w + t] * speed_max).collect();
                for t in lookback..s.bins {
                    normal.add(&lags(&series, t, lookback), series[t]);
                }
            }
        }
        let mut all = Normal::new(lookback + 1);
        per_row.iter().for_each(|n| all.merge(n));
        if all.rows == 0 {
            return Err(ModelError::Input(format!("no training series longer than {lookback} bins")));
        }
        let pooled = all.ridge(ridge).ok_or_else(|| ModelError::Numeric("singular pooled AR system".into()))?;
        let coefficients = per_row
            .iter()
            .map(|n| if n.rows > lookback { n.ridge(ridge).unwrap_or_else(|| pooled.clone()) } else { pooled.clone() })
            .collect();
        Ok(Self { lookback, ridge, speed_max, coefficients, pooled, logistic: fit_logistic(train)? })
    }

    fn row_coefficients(&self, r: usize) -> &[f64] {
        self.coefficients.get(r).unwrap_or(&self.pooled)
    }

    /// Rolls one link forward from `seed` (mph) for `bins` steps.
    pub fn roll(&self, coef: &[f64], seed: &[f64], bins: usize) -> Vec<f64> {
        let mut out: Vec<f64> = seed.iter().take(self.lookback.min(bins)).copied().collect();
        for t in out.len()..bins {
            let next = coef[0] + (1..=self.lookback).map(|j| coef[j] * out[t - j]).sum::<f64>();
            out.push(next.clamp(0.0, self.speed_max));
        }
        out
    }

    pub fn incident_probability(&self, sample: &Sample) -> f64 {
        let f = &sample.x_wz.values;
        let z = self.logistic[0] + self.logistic[1] * f[3] + self.logistic[2] * f[2];
        1.0 / (1.0 + (-z).exp())
    }

    pub fn predict(&self, sample: &Sample) -> PredictionOutput {
        let (w, s_max) = (sample.width(), self.speed_max);
        let hist = sample.historical();
        let mut y = vec![0.0; hist.len()];
        for r in 0..sample.links {
            let seed: Vec<f64> = (0..sample.bins).map(|t| hist[r * w + t] * s_max).collect();
            let rolled = self.roll(self.row_coefficients(r), &seed, sample.bins);
            for (t, v) in rolled.into_iter().enumerate() {
                y[r * w + t] = (v / s_max).clamp(0.0, 1.0);
            }
        }
        let p = self.incident_probability(sample);
        PredictionOutput { y_speed_hat: y, p_incident: [1.0 - p, p] }
    }
}

/// Newton iterations for logistic regression on lanes closed and duration.
fn fit_logistic(train: &[&Sample]) -> Result<[f64; 3]> {
    let mut w = [0.0f64; 3];
    for _ in 0..50 {
        let mut h = vec![vec![0.0; 3]; 3];
        let mut g = vec![0.0; 3];
        for s in train {
            let x = [1.0, s.x_wz.values[3], s.x_wz.values[2]];
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            let y = s.y_incident as f64;
            for i in 0..3 {
                g[i] += (p - y) * x[i];
                for j in 0..3 {
                    h[i][j] += p * (1.0 - p) * x[i] * x[j];
                }
            }
        }
        // small ridge keeps separable data finite
        for (i, row) in h.iter_mut().enumerate() {
            row[i] += 1e-6;
            g[i] += 1e-6 * w[i];
        }
        let step = solve(h, g).ok_or_else(|| ModelError::Numeric("singular logistic Hessian".into()))?;
        let mut change = 0.0f64;
        for i in 0..3 {
            w[i] -= step[i];
            change = change.max(step[i].abs());
        }
        if change < 1e-12 {
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Numeric("logistic fit diverged".into()));
    }
    Ok(w)
}
