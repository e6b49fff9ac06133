use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_scenario, ScenarioConfig, ScenarioError, ScenarioRecord};
use crate::rng::seeded_rng;

pub const MIN_CORPUS: usize = 20;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitLists {
    pub fn get(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub count: usize,
    pub counts: SplitCounts,
    pub split: SplitLists,
    pub config: ScenarioConfig,
    /// Tool-level settings of the run that wrote the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl Manifest {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.split.get(s).iter().any(|x| x == id))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    /// Ordered by generation index.
    pub records: Vec<ScenarioRecord>,
}

impl Corpus {
    /// Wraps existing records (generated or ingested) with a manifest whose
    /// split is the seeded hash assignment of their ids.
    pub fn from_records(records: Vec<ScenarioRecord>, seed: u64, config: &ScenarioConfig) -> Self {
        let ids: Vec<String> = records.iter().map(|r| r.id().to_string()).collect();
        let split = assign_splits(seed, &ids);
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            seed,
            count: records.len(),
            counts: SplitCounts { train: split.train.len(), val: split.val.len(), test: split.test.len() },
            split,
            config: config.clone(),
            provenance: None,
        };
        Corpus { manifest, records }
    }

    pub fn split(&self, split: Split) -> Vec<&ScenarioRecord> {
        let ids: BTreeSet<&str> = self.manifest.split.get(split).iter().map(String::as_str).collect();
        self.records.iter().filter(|r| ids.contains(r.id())).collect()
    }
}

pub(crate) fn scenario_id(index: usize) -> String {
    format!("wz{index:05}")
}

/// FNV-1a over the seed bytes followed by the id bytes.
fn split_hash(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(id.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Orders ids by hash and cuts exact 70/15/15 quotas.
pub(crate) fn assign_splits(seed: u64, ids: &[String]) -> SplitLists {
    let n = ids.len();
    let n_train = (n as f64 * 0.70).round() as usize;
    let n_val = (n as f64 * 0.15).round() as usize;
    let mut order: Vec<&String> = ids.iter().collect();
    order.sort_by_key(|id| (split_hash(seed, id), id.as_str()));
    let mut lists = SplitLists::default();
    for (rank, id) in order.into_iter().enumerate() {
        let list = if rank < n_train {
            &mut lists.train
        } else if rank < n_train + n_val {
            &mut lists.val
        } else {
            &mut lists.test
        };
        list.push(id.clone());
    }
    for list in [&mut lists.train, &mut lists.val, &mut lists.test] {
        list.sort();
    }
    lists
}

/// Scenario `i` is drawn from stream `i + 1` of `seed`, so the corpus does
/// not depend on generation order.
pub fn generate_corpus(count: usize, seed: u64, config: &ScenarioConfig) -> Result<Corpus, ScenarioError> {
    if count < MIN_CORPUS {
        return Err(ScenarioError::CorpusTooSmall(count));
    }
    let records: Vec<ScenarioRecord> = (0..count)
        .map(|i| generate_scenario(&scenario_id(i), config, &mut seeded_rng(seed, i as u64 + 1)))
        .collect();
    Ok(Corpus::from_records(records, seed, config))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.display().to_string(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Json { path: path.display().to_string(), source }
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&corpus.manifest).map_err(json_err(&path))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    for r in &corpus.records {
        let path = dir.join(format!("scenario_{}.json", r.id()));
        let text = serde_json::to_string(r).map_err(json_err(&path))?;
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus, ScenarioError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(json_err(&path))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Manifest(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let mut ids: Vec<&String> = Split::ALL.iter().flat_map(|&s| manifest.split.get(s)).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(ScenarioError::Manifest("a scenario id appears in more than one split".into()));
    }
    if ids.len() != manifest.count {
        return Err(ScenarioError::Manifest(format!("count {} but {} ids listed", manifest.count, ids.len())));
    }
    let mut records = Vec::with_capacity(ids.len());
    for id in ids {
        let path = dir.join(format!("scenario_{id}.json"));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let record: ScenarioRecord = serde_json::from_str(&text).map_err(json_err(&path))?;
        if record.id() != id {
            return Err(ScenarioError::Manifest(format!("{} holds scenario {}", path.display(), record.id())));
        }
        record.validate()?;
        records.push(record);
    }
    Ok(Corpus { manifest, records })
}
