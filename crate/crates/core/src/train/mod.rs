//! Mini-batch training with Adam and early stopping, plus checkpoints.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointMeta, TensorInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Batch, ModelConfig, ModelError, ModelParams, Network, Objective};
use crate::numerics::{adam_step, AdamHyper, AdamState, NumericWidth, NumericsError, Scalar};
use crate::rng::seeded_rng;
use crate::spacetime::Sample;

/// RNG stream ids derived from the training seed.
pub const STREAM_INIT: u64 = 0x1417;
pub const STREAM_SHUFFLE: u64 = 0x5AFF;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Huber threshold in mph.
    pub delta: f64,
    pub w1: f64,
    pub w2: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Smallest validation-loss decrease that resets patience.
    pub min_improvement: f64,
    pub seed: u64,
    pub width: NumericWidth,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            delta: 5.0,
            w1: 1.0,
            w2: 0.5,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            min_improvement: 1e-6,
            seed: 42,
            width: NumericWidth::F32,
        }
    }
}

impl TrainingConfig {
    pub fn objective(&self, speed_max: f64) -> Objective {
        Objective { delta: self.delta, w1: self.w1, w2: self.w2, speed_max }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective(80.0).validate()?;
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("bad Adam settings lr={} beta1={} beta2={}", self.lr, self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) || !(self.min_improvement >= 0.0) {
            return bad("eps must be > 0 and min_improvement >= 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_huber: f64,
    pub train_cross_entropy: f64,
    pub val_loss: f64,
    pub val_huber: f64,
    pub val_cross_entropy: f64,
    /// FNV-1a digest of the epoch's sample order.
    pub order_digest: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (lowest validation loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainingHistory {
    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut h = self.clone();
        h.epochs.iter_mut().for_each(|e| e.wall_time_s = 0.0);
        h
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

pub fn order_digest(order: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in order {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Sample-weighted mean loss of `samples` under `net`, in fixed order.
pub fn dataset_loss<T: Scalar>(
    net: &Network<T>,
    samples: &[&Sample],
    objective: &Objective,
    batch_size: usize,
) -> Result<crate::model::LossParts> {
    let mut acc = crate::model::LossParts::default();
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = Batch::from_samples(chunk)?;
        let out = net.predict(&batch)?;
        let p = objective.evaluate(&out, &batch)?.parts;
        let n = chunk.len() as f64;
        acc.total += p.total * n;
        acc.huber += p.huber * n;
        acc.cross_entropy += p.cross_entropy * n;
    }
    let n = samples.len().max(1) as f64;
    acc.total /= n;
    acc.huber /= n;
    acc.cross_entropy /= n;
    Ok(acc)
}

/// Trains a fresh network initialised from `config.seed`.
pub fn train<T: Scalar>(
    model: &ModelConfig,
    train_set: &[&Sample],
    val_set: &[&Sample],
    config: &TrainingConfig,
    speed_max: f64,
) -> Result<(ModelParams<T>, TrainingHistory)> {
    let params = ModelParams::init(model, &mut seeded_rng(config.seed, STREAM_INIT))?;
    train_from(params, train_set, val_set, config, speed_max)
}

/// Trains starting from `params`. Returns the parameters of the epoch with
/// the lowest validation loss.
pub fn train_from<T: Scalar>(
    params: ModelParams<T>,
    train_set: &[&Sample],
    val_set: &[&Sample],
    config: &TrainingConfig,
    speed_max: f64,
) -> Result<(ModelParams<T>, TrainingHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let objective = config.objective(speed_max);
    let mut net = Network::new(params);
    let mut adam = AdamState::new(config.adam(), &net.params.tensors);
    let mut shuffle_rng = seeded_rng(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams<T>)> = None;
    // last loss that counted as an improvement, for patience
    let mut reference = f64::INFINITY;
    let mut stale = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let digest = order_digest(&order);
        log::debug!("epoch {epoch} order {digest}");
        let (mut total, mut huber, mut ce) = (0.0, 0.0, 0.0);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let chunk: Vec<&Sample> = idx.iter().map(|&i| train_set[i]).collect();
            let batch = Batch::from_samples(&chunk)?;
            let out = net.forward(&batch)?;
            let lg = objective.evaluate(&out, &batch)?;
            if !lg.parts.total.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b, loss: lg.parts.total });
            }
            let grads = net.backward(&lg.d_speed, &lg.d_logits)?;
            adam_step(&mut net.params.tensors, &grads, &mut adam)?;
            let n = chunk.len() as f64;
            total += lg.parts.total * n;
            huber += lg.parts.huber * n;
            ce += lg.parts.cross_entropy * n;
        }
        let n = train_set.len() as f64;
        let val = dataset_loss(&net, val_set, &objective, config.batch_size)?;
        if !val.total.is_finite() {
            return Err(TrainError::NonFinite { epoch, batch: usize::MAX, loss: val.total });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / n,
            train_huber: huber / n,
            train_cross_entropy: ce / n,
            val_loss: val.total,
            val_huber: val.huber,
            val_cross_entropy: val.cross_entropy,
            order_digest: digest,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch:>3} train {:.4} val {:.4} ({:.1}s)",
            total / n,
            val.total,
            started.elapsed().as_secs_f64()
        );
        if best.as_ref().is_none_or(|(_, l, _)| val.total < *l) {
            best = Some((epoch, val.total, net.params.clone()));
        }
        if reference - val.total >= config.min_improvement {
            reference = val.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }
    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch ran");
    let history =
        TrainingHistory { stop_epoch: epochs.len(), epochs, best_epoch, best_val_loss, stop_reason };
    Ok((params, history))
}
