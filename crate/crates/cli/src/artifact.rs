use std::fs;
use std::path::Path;

use anyhow::anyhow;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, TOOL_SCHEMA_VERSION};
use crate::error::{CmdResult, Failure};
use workzone_core::model::{
    HistoricalAverage, LinearAr, ModelConfig, Network, PredictionOutput, Predictor, Result as ModelResult,
};
use workzone_core::scenario::ScenarioRecord;
use workzone_core::spacetime::Sample;
use workzone_core::train::{read_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

pub fn read_bytes(path: &Path) -> CmdResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::data(anyhow!("cannot read {}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CmdResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(anyhow!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::data(anyhow!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(anyhow!("{}: {e}", path.display())))?;
    write_bytes(path, (text + "\n").as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CmdResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::data(anyhow!("{}: {e}", path.display())))
}

pub fn read_scenario(path: &Path) -> CmdResult<ScenarioRecord> {
    let record: ScenarioRecord = read_json(path)?;
    record.validate().map_err(|e| Failure::from(e).context(path.display().to_string()))?;
    Ok(record)
}

/// `{"schema_version": .., "config": ..}` stamped into every artifact.
pub fn provenance(config: &RunConfig) -> Value {
    json!({ "schema_version": TOOL_SCHEMA_VERSION, "config": config })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    HistoricalAverage(HistoricalAverage),
    LinearAr(LinearAr),
}

impl BaselineModel {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            BaselineModel::HistoricalAverage(m) => m,
            BaselineModel::LinearAr(m) => m,
        }
    }
}

/// A fitted baseline written by `train --baseline`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineArtifact {
    pub schema_version: u32,
    pub baseline: BaselineModel,
    pub config: RunConfig,
}

/// A checkpoint or a fitted baseline.
pub enum LoadedModel {
    Network { net: Network<f32>, config: Option<RunConfig> },
    Baseline(BaselineArtifact),
}

impl LoadedModel {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let bytes = read_bytes(path)?;
        if bytes.starts_with(CHECKPOINT_MAGIC) {
            let ck: Checkpoint = read_checkpoint(&bytes, &path.display().to_string())?;
            let config = match ck.meta.extra.get("config") {
                Some(v) => Some(
                    serde_json::from_value::<RunConfig>(v.clone())
                        .map_err(|e| Failure::data(anyhow!("{}: embedded config: {e}", path.display())))?,
                ),
                None => None,
            };
            return Ok(LoadedModel::Network { net: Network::new(ck.params), config });
        }
        let artifact: BaselineArtifact = serde_json::from_slice(&bytes).map_err(|e| {
            Failure::data(anyhow!("{} is neither a checkpoint nor a baseline file: {e}", path.display()))
        })?;
        if artifact.schema_version != TOOL_SCHEMA_VERSION {
            return Err(Failure::data(anyhow!(
                "{}: schema version {} (expected {TOOL_SCHEMA_VERSION})",
                path.display(),
                artifact.schema_version
            )));
        }
        Ok(LoadedModel::Baseline(artifact))
    }

    pub fn embedded_config(&self) -> Option<&RunConfig> {
        match self {
            LoadedModel::Network { config, .. } => config.as_ref(),
            LoadedModel::Baseline(a) => Some(&a.config),
        }
    }

    pub fn model_config(&self) -> Option<&ModelConfig> {
        match self {
            LoadedModel::Network { net, .. } => Some(&net.params.config),
            LoadedModel::Baseline(_) => None,
        }
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            LoadedModel::Network { net, .. } => net,
            LoadedModel::Baseline(a) => a.baseline.predictor(),
        }
    }

    /// Rejects a network whose canvas or channel count differs from the
    /// samples the config builds.
    pub fn check_compatible(&self, config: &RunConfig) -> CmdResult<()> {
        let Some(m) = self.model_config() else { return Ok(()) };
        let st = &config.spacetime;
        if (m.height, m.width) != (st.height, st.width) || m.in_channels != st.channels() {
            return Err(Failure::data(anyhow!(
                "model canvas {}x{} with {} channels does not match scenario canvas {}x{} with {} channels",
                m.height,
                m.width,
                m.in_channels,
                st.height,
                st.width,
                st.channels()
            )));
        }
        Ok(())
    }

    pub fn predict_all(&self, samples: &[Sample]) -> ModelResult<Vec<PredictionOutput>> {
        self.predictor().predict_all(samples)
    }
}

/// Output of `predict`: one scenario, speeds in mph, `null` on padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub schema_version: u32,
    pub model: String,
    pub scenario: String,
    pub height: usize,
    pub width: usize,
    pub links: usize,
    pub bins: usize,
    pub speed_max: f64,
    /// Rows are links nearest the work zone first, columns are time bins.
    pub y_speed_mph: Vec<Vec<Option<f64>>>,
    /// Probability of an incident.
    pub p_incident: f64,
    /// Full softmax, `[no incident, incident]`.
    pub incident_probabilities: [f64; 2],
    pub mask: Vec<Vec<u8>>,
    pub config: Value,
}

impl PredictionFile {
    pub fn new(model: &str, sample: &Sample, out: &PredictionOutput, speed_max: f64, config: &RunConfig) -> Self {
        let (h, w) = (sample.height(), sample.width());
        let y_speed_mph = (0..h)
            .map(|r| {
                (0..w)
                    .map(|c| {
                        let i = r * w + c;
                        (sample.mask[i] > 0.0).then(|| out.y_speed_hat[i] * speed_max)
                    })
                    .collect()
            })
            .collect();
        let mask = (0..h).map(|r| (0..w).map(|c| (sample.mask[r * w + c] > 0.0) as u8).collect()).collect();
        Self {
            schema_version: TOOL_SCHEMA_VERSION,
            model: model.to_string(),
            scenario: sample.id.clone(),
            height: h,
            width: w,
            links: sample.links,
            bins: sample.bins,
            speed_max,
            y_speed_mph,
            p_incident: out.incident_probability(),
            incident_probabilities: out.p_incident,
            mask,
            config: provenance(config),
        }
    }
}
