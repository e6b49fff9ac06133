//! Encoder-decoder network, its objective, and the two baselines.

mod baselines;
mod check;
mod network;
mod objective;
mod params;

pub use baselines::{HistoricalAverage, LinearAr, AR_LOOKBACK, AR_RIDGE};
pub use check::{model_gradcheck, synthetic_batch, ModelGradcheck, MODEL_GRADCHECK_FLOOR, MODEL_GRADCHECK_TOLERANCE};
pub use network::{Batch, BatchOutput, Network};
pub use objective::{LossGrad, LossParts, Objective};
pub use params::{ModelConfig, ModelParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::NumericsError;
use crate::spacetime::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid model input: {0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Prediction for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    /// Normalised speed canvas, row-major `[h, w]`.
    pub y_speed_hat: Vec<f64>,
    /// `[p(no incident), p(incident)]`.
    pub p_incident: [f64; 2],
}

impl PredictionOutput {
    pub fn incident_probability(&self) -> f64 {
        self.p_incident[1]
    }
}

/// Anything that maps a sample to a speed canvas and incident probabilities.
pub trait Predictor {
    fn name(&self) -> &str;
    fn predict_sample(&self, sample: &Sample) -> Result<PredictionOutput>;

    fn predict_all(&self, samples: &[Sample]) -> Result<Vec<PredictionOutput>> {
        samples.iter().map(|s| self.predict_sample(s)).collect()
    }
}

impl Predictor for HistoricalAverage {
    fn name(&self) -> &str {
        "historical_average"
    }

    fn predict_sample(&self, sample: &Sample) -> Result<PredictionOutput> {
        Ok(self.predict(sample))
    }
}

impl Predictor for LinearAr {
    fn name(&self) -> &str {
        "linear_ar"
    }

    fn predict_sample(&self, sample: &Sample) -> Result<PredictionOutput> {
        Ok(self.predict(sample))
    }
}
