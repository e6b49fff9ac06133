//! Speed, incident and congestion-region evaluation.

mod metrics;
mod otsu;
mod regions;

pub use metrics::{
    classification_metrics, relative_improvement, speed_metrics, ClassificationMetrics, SpeedAccumulator,
    SpeedMetrics,
};
pub use otsu::{between_class_variance, otsu_histogram, otsu_threshold, OtsuThreshold, OTSU_BINS};
pub use regions::{
    congestion_attributes, congestion_rmse, extract_congestion_regions, primary_region, speed_drop_image,
    CongestionRegion, CongestionScores, MIN_REGION_BINS,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spacetime::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("metric mask has no active cells")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Positive incident prediction iff `p >= incident_threshold`.
    pub incident_threshold: f64,
    /// Drops at or below this (mph) never count as congestion.
    pub min_drop_mph: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { incident_threshold: 0.5, min_drop_mph: 5.0 }
    }
}

/// Truth-side and predicted congestion regions of one sample.
pub fn sample_regions(
    sample: &Sample,
    pred_speed: &[f64],
    speed_max: f64,
    config: &EvalConfig,
) -> Result<(Vec<CongestionRegion>, Vec<CongestionRegion>)> {
    let mph = |v: &[f64]| v.iter().map(|x| x * speed_max).collect::<Vec<_>>();
    let hist = mph(&sample.historical());
    let (h, w) = (sample.height(), sample.width());
    let truth_drop = speed_drop_image(&hist, &mph(&sample.y_speed), &sample.mask)?;
    let pred_drop = speed_drop_image(&hist, &mph(pred_speed), &sample.mask)?;
    Ok((
        extract_congestion_regions(&truth_drop, &sample.mask, h, w, &sample.link_lengths, config.min_drop_mph)?,
        extract_congestion_regions(&pred_drop, &sample.mask, h, w, &sample.link_lengths, config.min_drop_mph)?,
    ))
}

/// Metrics of one predictor over a set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    pub speed: SpeedMetrics,
    pub classification: ClassificationMetrics,
    pub congestion: CongestionScores,
}

/// `pred_speed[i]` is the normalised speed canvas for `samples[i]` and
/// `p_incident[i]` its incident probability. Speed metrics are pooled over
/// every masked cell, in mph.
pub fn evaluate(
    samples: &[Sample],
    pred_speed: &[Vec<f64>],
    p_incident: &[f64],
    speed_max: f64,
    config: &EvalConfig,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(EvalError::InvalidInput("no samples to evaluate".into()));
    }
    if pred_speed.len() != samples.len() || p_incident.len() != samples.len() {
        return Err(EvalError::Shape(format!(
            "{} samples, {} speed predictions, {} incident predictions",
            samples.len(),
            pred_speed.len(),
            p_incident.len()
        )));
    }
    let mut acc = SpeedAccumulator::default();
    let mut regions = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(pred_speed) {
        let mph = |v: &[f64]| v.iter().map(|x| x * speed_max).collect::<Vec<_>>();
        acc.add(&mph(p), &mph(&s.y_speed), &s.mask)?;
        regions.push(sample_regions(s, p, speed_max, config)?);
    }
    let labels: Vec<u8> = samples.iter().map(|s| s.y_incident).collect();
    Ok(Evaluation {
        samples: samples.len(),
        speed: acc.finish()?,
        classification: classification_metrics(p_incident, &labels, config.incident_threshold)?,
        congestion: congestion_rmse(regions.iter().map(|(t, p)| (&t[..], &p[..]))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionRmse {
    /// Minutes.
    pub start: Option<f64>,
    /// Minutes.
    pub duration: Option<f64>,
    /// Miles.
    pub queue: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub samples: usize,
    pub congested_samples: usize,
    pub matched_regions: usize,
    pub missed_regions: usize,
    pub false_alarm_regions: usize,
}

/// Percent improvement of the reported model over one baseline; positive
/// means the model has lower error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub mape: Option<f64>,
    pub congestion_start: Option<f64>,
    pub congestion_duration: Option<f64>,
    pub congestion_queue: Option<f64>,
}

impl Improvement {
    pub fn between(baseline: &Evaluation, model: &Evaluation) -> Self {
        let imp = |b: f64, m: f64| relative_improvement(b, m).ok();
        let opt = |b: Option<f64>, m: Option<f64>| b.zip(m).and_then(|(b, m)| imp(b, m));
        let (bc, mc) = (&baseline.congestion, &model.congestion);
        Self {
            mae: imp(baseline.speed.mae, model.speed.mae),
            rmse: imp(baseline.speed.rmse, model.speed.rmse),
            mape: imp(baseline.speed.mape, model.speed.mape),
            congestion_start: opt(bc.rmse_start, mc.rmse_start),
            congestion_duration: opt(bc.rmse_duration, mc.rmse_duration),
            congestion_queue: opt(bc.rmse_queue, mc.rmse_queue),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub split: String,
    pub speed: SpeedMetrics,
    pub classification: ClassificationMetrics,
    pub congestion_rmse: CongestionRmse,
    pub counts: EvalCounts,
    /// Keyed by baseline name.
    pub relative_improvement: BTreeMap<String, Improvement>,
    /// Per-baseline metrics the improvements were computed from.
    pub baselines: BTreeMap<String, Evaluation>,
    /// Effective run configuration.
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(
        model: &str,
        split: &str,
        evaluation: &Evaluation,
        baselines: &[(String, Evaluation)],
        config: serde_json::Value,
    ) -> Self {
        let c = &evaluation.congestion;
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            model: model.to_string(),
            split: split.to_string(),
            speed: evaluation.speed,
            classification: evaluation.classification,
            congestion_rmse: CongestionRmse { start: c.rmse_start, duration: c.rmse_duration, queue: c.rmse_queue },
            counts: EvalCounts {
                samples: evaluation.samples,
                congested_samples: c.congested_samples,
                matched_regions: c.matched,
                missed_regions: c.missed,
                false_alarm_regions: c.false_alarms,
            },
            relative_improvement: baselines
                .iter()
                .map(|(name, b)| (name.clone(), Improvement::between(b, evaluation)))
                .collect(),
            baselines: baselines.iter().cloned().collect(),
            config,
        }
    }

    /// Fixed-width tables: speed, congested area, incident.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, Evaluation)> = self.baselines.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        rows.push((
            self.model.clone(),
            Evaluation {
                samples: self.counts.samples,
                speed: self.speed,
                classification: self.classification,
                congestion: CongestionScores {
                    rmse_start: self.congestion_rmse.start,
                    rmse_duration: self.congestion_rmse.duration,
                    rmse_queue: self.congestion_rmse.queue,
                    congested_samples: self.counts.congested_samples,
                    matched: self.counts.matched_regions,
                    missed: self.counts.missed_regions,
                    false_alarms: self.counts.false_alarm_regions,
                },
            },
        ));
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut out = String::new();
        let _ = writeln!(out, "SPEED PREDICTION ({} split, {} samples)", self.split, self.counts.samples);
        let _ = writeln!(out, "{:<20} {:>8} {:>8} {:>8}", "model", "MAE", "RMSE", "MAPE%");
        for (name, e) in &rows {
            let _ = writeln!(out, "{:<20} {:>8.3} {:>8.3} {:>8.2}", name, e.speed.mae, e.speed.rmse, e.speed.mape);
        }
        let _ = writeln!(out, "\nCONGESTED AREA (RMSE; minutes, minutes, miles)");
        let _ = writeln!(out, "{:<20} {:>8} {:>8} {:>8} {:>8}", "model", "start", "duration", "queue", "matched");
        for (name, e) in &rows {
            let c = &e.congestion;
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>8} {:>8}",
                name,
                opt(c.rmse_start),
                opt(c.rmse_duration),
                opt(c.rmse_queue),
                c.matched
            );
        }
        let _ = writeln!(out, "\nINCIDENT PREDICTION");
        let _ = writeln!(out, "{:<20} {:>8} {:>8} {:>8}", "model", "recall", "precision", "F1");
        for (name, e) in &rows {
            let m = &e.classification;
            let _ = writeln!(out, "{:<20} {:>8.3} {:>8.3} {:>8.3}", name, m.recall, m.precision, m.f1);
        }
        if !self.relative_improvement.is_empty() {
            let _ = writeln!(out, "\nIMPROVEMENT OF {} (%)", self.model);
            let _ = writeln!(out, "{:<20} {:>8} {:>8} {:>8} {:>8}", "over", "MAE", "RMSE", "MAPE", "queue");
            for (name, imp) in &self.relative_improvement {
                let _ = writeln!(
                    out,
                    "{:<20} {:>8} {:>8} {:>8} {:>8}",
                    name,
                    opt(imp.mae),
                    opt(imp.rmse),
                    opt(imp.mape),
                    opt(imp.congestion_queue)
                );
            }
        }
        out
    }
}
