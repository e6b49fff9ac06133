use super::{Batch, ModelConfig, ModelParams, Network, Objective, Result};
use crate::numerics::{GradCheck, GradCheckReport, Tensor, FD_STEP};
use crate::rng::seeded_rng;

pub const MODEL_GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this are compared absolutely (to `floor * tol`).
/// The loss is O(10) in mph units, so central-difference roundoff alone
/// is about 1e-9.
pub const MODEL_GRADCHECK_FLOOR: f64 = 1e-4;

/// Largest real extent (rows and columns) of a synthetic sample. On big
/// canvases a full real area puts so many relu and pooling kinks within a
/// finite-difference step that most coordinates become unverifiable; the
/// padding beyond this extent feeds constant activations instead.
pub const SYNTHETIC_EXTENT: usize = 8;

/// Random two-sample batch for `config`. The first sample is real on the
/// top-left `SYNTHETIC_EXTENT` square (the whole 8x8 reduced canvas); the
/// second also masks that square's last row and last two columns.
pub fn synthetic_batch(config: &ModelConfig, seed: u64) -> Batch<f64> {
    let mut rng = seeded_rng(seed, 0xBA7C);
    let (n, h, w) = (2, config.height, config.width);
    let (rows, cols) = (h.min(SYNTHETIC_EXTENT), w.min(SYNTHETIC_EXTENT));
    let mut mask = vec![0.0; n * h * w];
    for r in 0..rows {
        for c in 0..cols {
            mask[r * w + c] = 1.0;
            if r + 1 < rows && c + 2 < cols {
                mask[h * w + r * w + c] = 1.0;
            }
        }
    }
    let x = Tensor::from_fn(&[n, h, w, config.in_channels], |i| {
        let cell = i / config.in_channels;
        if mask[cell] > 0.0 {
            rng.uniform(0.0, 1.0)
        } else {
            0.0
        }
    });
    let wz = Tensor::from_fn(&[n, config.wz_features], |_| rng.uniform(0.0, 1.0));
    let y_speed = Tensor::from_fn(&[n, h, w], |i| if mask[i] > 0.0 { rng.uniform(0.1, 0.9) } else { 0.0 });
    Batch {
        x,
        wz,
        mask: Tensor::new(&[n, h, w], mask).expect("mask shape"),
        y_speed,
        y_incident: vec![1, 0],
    }
}

/// Settings of [`model_gradcheck`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelGradcheck {
    pub seed: u64,
    pub tolerance: f64,
    /// Scale the analytic conv1 kernel gradient by 1.01 before comparison,
    /// which must make the check fail.
    pub inject_fault: bool,
    /// Seeded coordinates checked per tensor; `None` checks all.
    pub per_block: Option<usize>,
    pub step: f64,
}

impl Default for ModelGradcheck {
    fn default() -> Self {
        Self { seed: 7, tolerance: MODEL_GRADCHECK_TOLERANCE, inject_fault: false, per_block: None, step: FD_STEP }
    }
}

/// End-to-end check of the training-loss gradient w.r.t. the parameters.
pub fn model_gradcheck(config: &ModelConfig, objective: &Objective, opts: &ModelGradcheck) -> Result<GradCheckReport> {
    let ModelGradcheck { seed, tolerance, inject_fault, per_block, step } = *opts;
    let mut rng = seeded_rng(seed, 0x9C);
    let mut params: ModelParams<f64> = ModelParams::init(config, &mut rng)?;
    // Zero biases put every relu fed only by zero padding exactly on its kink.
    let names = params.names();
    for (t, name) in params.tensors.iter_mut().zip(&names) {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|b| *b = rng.uniform(-0.1, 0.1));
        }
    }
    let batch = synthetic_batch(config, seed);
    let mut net = Network::new(params.clone());
    let out = net.forward(&batch)?;
    let lg = objective.evaluate(&out, &batch)?;
    let mut grads = net.backward(&lg.d_speed, &lg.d_logits)?;
    if inject_fault {
        for g in grads[0].data_mut() {
            *g *= 1.01;
        }
    }

    let mut check = GradCheck::new(tolerance).with_floor(MODEL_GRADCHECK_FLOOR).with_step(step);
    let mut probe = Network::new(params.clone());
    for (slot, name) in names.iter().enumerate() {
        let point = params.tensors[slot].data().to_vec();
        let indices: Vec<usize> = match per_block {
            Some(k) if k < point.len() => {
                let mut all: Vec<usize> = (0..point.len()).collect();
                rng.shuffle(&mut all);
                all.truncate(k);
                all.sort_unstable();
                all
            }
            _ => (0..point.len()).collect(),
        };
        check.check_indices(name, &point, grads[slot].data(), indices, |i, v| {
            let saved = probe.params.tensors[slot].data()[i];
            probe.params.tensors[slot].data_mut()[i] = v;
            let loss = probe
                .predict(&batch)
                .and_then(|o| objective.evaluate(&o, &batch))
                .map(|g| g.parts.total)
                .unwrap_or(f64::NAN);
            probe.params.tensors[slot].data_mut()[i] = saved;
            loss
        });
    }
    Ok(check.finish())
}
