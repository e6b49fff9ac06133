use serde::{Deserialize, Serialize};

use super::{Batch, BatchOutput, ModelError, Result};
use crate::numerics::{combined_loss, cross_entropy, huber_loss, NumericsError, Scalar, Tensor};

/// Weighted Huber + cross-entropy objective. Huber is taken on speeds in
/// mph (`speed_max` times the normalised values) so `delta` is in mph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub delta: f64,
    pub w1: f64,
    pub w2: f64,
    pub speed_max: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self { delta: 5.0, w1: 1.0, w2: 0.5, speed_max: 80.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub huber: f64,
    pub cross_entropy: f64,
}

/// Loss and its gradients w.r.t. the speed map and the incident logits.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    pub parts: LossParts,
    pub d_speed: Tensor<T>,
    pub d_logits: Tensor<T>,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(ModelError::Config(format!("huber delta must be > 0, got {}", self.delta)));
        }
        if !(self.speed_max > 0.0) {
            return Err(ModelError::Config(format!("speed_max must be > 0, got {}", self.speed_max)));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return Err(ModelError::Config(format!("loss weights must be >= 0, got {} and {}", self.w1, self.w2)));
        }
        if self.w1 == 0.0 && self.w2 == 0.0 {
            return Err(NumericsError::ZeroWeights.into());
        }
        Ok(())
    }

    /// Mean over samples of `w1 * huber_i + w2 * ce_i`, where `huber_i`
    /// averages over the masked cells of sample `i` only.
    pub fn evaluate<T: Scalar>(&self, out: &BatchOutput<T>, batch: &Batch<T>) -> Result<LossGrad<T>> {
        self.validate()?;
        let n = batch.len();
        if out.y_speed.shape() != batch.y_speed.shape() || out.probs.shape() != [n, 2] {
            return Err(ModelError::Input(format!(
                "output {:?}/{:?} does not match batch {:?}",
                out.y_speed.shape(),
                out.probs.shape(),
                batch.y_speed.shape()
            )));
        }
        let cells = batch.y_speed.len() / n;
        let s = T::of(self.speed_max);
        let (w1, w2, delta) = (T::of(self.w1), T::of(self.w2), T::of(self.delta));
        let inv_n = T::one() / T::of(n as f64);
        let mut d_speed = Vec::with_capacity(n * cells);
        let mut d_logits = Vec::with_capacity(2 * n);
        let mut parts = LossParts::default();
        for i in 0..n {
            let range = i * cells..(i + 1) * cells;
            let scale = |v: &[T]| Tensor::new(&[cells], v.iter().map(|&x| x * s).collect());
            let pred = scale(&out.y_speed.data()[range.clone()])?;
            let target = scale(&batch.y_speed.data()[range.clone()])?;
            let mask = Tensor::new(&[cells], batch.mask.data()[range].to_vec())?;
            let (h, gh) = huber_loss(&pred, &target, &mask, delta)?;
            let ce = cross_entropy(&out.probs.data()[2 * i..2 * i + 2], batch.y_incident[i] as usize)?;
            let total = combined_loss(h, ce.loss, w1, w2)?;
            parts.total += total.as_f64();
            parts.huber += h.as_f64();
            parts.cross_entropy += ce.loss.as_f64();
            // d/d(y_hat) = speed_max * d/d(pred_mph)
            d_speed.extend(gh.data().iter().map(|&g| w1 * s * g * inv_n));
            d_logits.extend(ce.logit_grad.iter().map(|&g| w2 * g * inv_n));
        }
        let nf = n as f64;
        parts.total /= nf;
        parts.huber /= nf;
        parts.cross_entropy /= nf;
        Ok(LossGrad {
            parts,
            d_speed: Tensor::new(batch.y_speed.shape(), d_speed)?,
            d_logits: Tensor::new(&[n, 2], d_logits)?,
        })
    }
}
