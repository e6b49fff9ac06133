use std::fs;
use std::path::Path;

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use crate::error::{CmdResult, Failure};
use workzone_core::eval::EvalConfig;
use workzone_core::ingest::IngestConfig;
use workzone_core::model::{ModelConfig, AR_LOOKBACK, AR_RIDGE};
use workzone_core::scenario::ScenarioConfig;
use workzone_core::spacetime::{SpacetimeConfig, WZ_FEATURES};
use workzone_core::train::TrainingConfig;

/// Version of every JSON artifact this tool writes.
pub const TOOL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { count: 1000, seed: 42 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub ar_lookback: usize,
    pub ar_ridge: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { ar_lookback: AR_LOOKBACK, ar_ridge: AR_RIDGE }
    }
}

/// Every tunable of a run. Missing keys take their defaults; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub corpus: CorpusConfig,
    pub scenario: ScenarioConfig,
    pub spacetime: SpacetimeConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub ingest: IngestConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: TOOL_SCHEMA_VERSION,
            corpus: CorpusConfig::default(),
            scenario: ScenarioConfig::default(),
            spacetime: SpacetimeConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            ingest: IngestConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CmdResult<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Failure::usage(anyhow!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(anyhow!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|f| f.context(format!("config {}", path.display())))
    }

    /// `--config` if given, else the config embedded in an input artifact,
    /// else the defaults.
    pub fn resolve(path: Option<&Path>, embedded: Option<&RunConfig>) -> CmdResult<Self> {
        match (path, embedded) {
            (Some(p), _) => Self::load(p),
            (None, Some(c)) => Ok(c.clone()),
            (None, None) => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> CmdResult<()> {
        if self.schema_version != TOOL_SCHEMA_VERSION {
            return Err(Failure::usage(anyhow!(
                "config schema_version {} is not supported (expected {TOOL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.spacetime.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        let (st, m) = (&self.spacetime, &self.model);
        if (m.height, m.width) != (st.height, st.width) {
            return Err(Failure::usage(anyhow!(
                "model canvas {}x{} does not match spacetime canvas {}x{}",
                m.height,
                m.width,
                st.height,
                st.width
            )));
        }
        if m.in_channels != st.channels() {
            return Err(Failure::usage(anyhow!(
                "model expects {} input channels but the spacetime config produces {} ({})",
                m.in_channels,
                st.channels(),
                st.channel_names().join(", ")
            )));
        }
        if m.wz_features != WZ_FEATURES {
            return Err(Failure::usage(anyhow!("model.wz_features must be {WZ_FEATURES}, got {}", m.wz_features)));
        }
        if !(0.0..=1.0).contains(&self.eval.incident_threshold) || self.eval.min_drop_mph < 0.0 {
            return Err(Failure::usage(anyhow!(
                "eval.incident_threshold must be in [0, 1] and eval.min_drop_mph >= 0"
            )));
        }
        if self.baseline.ar_lookback == 0 || !(self.baseline.ar_ridge >= 0.0) {
            return Err(Failure::usage(anyhow!("baseline.ar_lookback must be >= 1 and baseline.ar_ridge >= 0")));
        }
        if !(self.ingest.window_miles > 0.0) {
            return Err(Failure::usage(anyhow!("ingest.window_miles must be > 0")));
        }
        Ok(())
    }
}
