use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError, TrainingConfig};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AMCN";
pub const CHECKPOINT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// `[height, width]`.
    pub canvas: [usize; 2],
    /// Declared parameter order of the blob.
    pub tensors: Vec<TensorInfo>,
    pub parameter_count: usize,
    pub speed_max: f64,
    pub training: Option<TrainingConfig>,
    /// Free-form provenance (run config, history summary).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams<f32>,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams<f32>,
        speed_max: f64,
        training: Option<TrainingConfig>,
        extra: serde_json::Value,
    ) -> Self {
        let c = &params.config;
        let meta = CheckpointMeta {
            model: c.clone(),
            canvas: [c.height, c.width],
            tensors: c
                .layout()
                .into_iter()
                .map(|(name, shape)| TensorInfo { name: name.to_string(), shape })
                .collect(),
            parameter_count: params.len(),
            speed_max,
            training,
            extra,
        };
        Self { meta, params }
    }
}

/// Serialises a checkpoint to bytes.
pub fn write_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let meta = serde_json::to_vec(&ck.meta).expect("checkpoint metadata serialises");
    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * ck.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for t in &ck.params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses checkpoint bytes. `origin` only labels errors.
pub fn read_checkpoint(bytes: &[u8], origin: &str) -> Result<Checkpoint> {
    let fail = |reason: String| TrainError::Checkpoint { path: origin.to_string(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported version {} (expected {CHECKPOINT_VERSION})", bytes[4])));
    }
    let meta_len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|l| HEADER_LEN.checked_add(l))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail(format!("metadata length {meta_len} exceeds file size {}", bytes.len())))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[HEADER_LEN..meta_end]).map_err(|e| fail(format!("bad metadata: {e}")))?;

    let layout = meta.model.layout();
    let declared: Vec<(String, Vec<usize>)> = meta.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    let expected: Vec<(String, Vec<usize>)> = layout.iter().map(|(n, s)| (n.to_string(), s.clone())).collect();
    if declared != expected {
        return Err(fail("declared tensor list disagrees with the model config".into()));
    }
    let count: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if count != meta.parameter_count {
        return Err(fail(format!("parameter_count {} but shapes give {count}", meta.parameter_count)));
    }
    let blob = &bytes[meta_end..];
    if blob.len() != 4 * count {
        return Err(fail(format!("parameter blob is {} bytes, expected {}", blob.len(), 4 * count)));
    }
    let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut tensors = Vec::with_capacity(expected.len());
    for (_, shape) in &expected {
        let n = shape.iter().product();
        let data: Vec<f32> = values.by_ref().take(n).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| fail(e.to_string()))?);
    }
    let params = ModelParams::from_tensors(&meta.model, tensors).map_err(|e| fail(e.to_string()))?;
    Ok(Checkpoint { meta, params })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, write_checkpoint(ck)).map_err(|source| TrainError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
    read_checkpoint(&bytes, &path.display().to_string())
}

/// Loads a checkpoint and checks it against the expected model layout,
/// reporting every tensor whose shape differs.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let want = expected.layout();
    let got = ck.params.config.layout();
    let mismatches: Vec<String> = want
        .iter()
        .zip(&got)
        .filter(|(a, b)| a.1 != b.1)
        .map(|((name, w), (_, g))| format!("{name}: checkpoint {g:?}, config {w:?}"))
        .collect();
    if !mismatches.is_empty() || ck.params.config.attention_enabled != expected.attention_enabled {
        let mut reason = format!(
            "checkpoint canvas {}x{} does not match config {}x{}",
            ck.meta.canvas[0], ck.meta.canvas[1], expected.height, expected.width
        );
        if mismatches.is_empty() {
            reason = format!("attention_enabled differs (checkpoint {})", ck.params.config.attention_enabled);
        } else {
            reason.push_str("; ");
            reason.push_str(&mismatches.join("; "));
        }
        return Err(TrainError::Checkpoint { path: path.display().to_string(), reason });
    }
    Ok(ck)
}
