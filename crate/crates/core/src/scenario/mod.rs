//! Deterministic synthetic work-zone corpus.
//!
//! Each scenario is a planned lane closure on a corridor of upstream links,
//! historical speed/volume profiles for the closure window, the speeds that
//! actually occurred (a point-queue bottleneck model), and an incident label.

mod corpus;
mod generate;
mod simulate;

pub use corpus::{generate_corpus, read_corpus, write_corpus, Corpus, Manifest, Split, SplitCounts, SplitLists, MIN_CORPUS, SCHEMA_VERSION};
pub use generate::{
    generate_scenario, historical_profiles, historical_profiles_with, incident_label, incident_probability,
    sample_corridor, sample_workzone, ProfileShape, Profiles,
};
pub use simulate::{simulate_ground_truth, GroundTruth};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minutes per time bin.
pub const BIN_MINUTES: u32 = 15;
/// Upstream extent of the target-link window, miles.
pub const WINDOW_MILES: f64 = 5.0;
pub const MIN_LINK_MILES: f64 = 0.2;
pub const MAX_LINK_MILES: f64 = 0.8;
pub const MAX_LANES: u8 = 6;
pub const MIN_DURATION: u32 = 60;
pub const MAX_DURATION: u32 = 1425;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid work zone event {id}: {reason}")]
    InvalidEvent { id: String, reason: String },
    #[error("invalid corridor: {0}")]
    InvalidCorridor(String),
    #[error("invalid scenario {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("corpus needs at least {MIN_CORPUS} scenarios, got {0}")]
    CorpusTooSmall(usize),
    #[error("corpus io at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus json at {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("corpus manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    Freeway,
    Arterial,
}

/// Characteristics of a planned lane closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkZoneEvent {
    pub id: String,
    /// Minutes from midnight, multiple of 15.
    pub start_time: u32,
    /// Minutes from midnight of the start day; may exceed 1440.
    pub end_time: u32,
    /// 0 = Monday .. 6 = Sunday.
    pub day_of_week: u8,
    pub lanes_closed: u8,
    pub lanes_total: u8,
    pub road_type: RoadType,
    pub has_on_ramp: bool,
    pub has_off_ramp: bool,
    /// Work-zone location, miles.
    pub milepost: f64,
}

impl WorkZoneEvent {
    pub fn duration(&self) -> u32 {
        self.end_time.saturating_sub(self.start_time)
    }

    /// Number of 15-minute bins the closure spans.
    pub fn bins(&self) -> usize {
        (self.duration() / BIN_MINUTES) as usize
    }

    pub fn lanes_open(&self) -> u8 {
        self.lanes_total - self.lanes_closed
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |reason: String| Err(ScenarioError::InvalidEvent { id: self.id.clone(), reason });
        if self.start_time >= 1440 || self.start_time % BIN_MINUTES != 0 {
            return fail(format!("start time {} is not a quarter-hour of the day", self.start_time));
        }
        if self.end_time < self.start_time || self.duration() % BIN_MINUTES != 0 {
            return fail(format!("end time {} not aligned after start {}", self.end_time, self.start_time));
        }
        if self.duration() >= 1440 {
            return fail("duration ≥ 24h".into());
        }
        if self.duration() < MIN_DURATION {
            return fail(format!("duration {} min is under one hour", self.duration()));
        }
        if self.day_of_week > 6 {
            return fail(format!("day of week {}", self.day_of_week));
        }
        if self.lanes_closed < 1 || self.lanes_closed >= self.lanes_total || self.lanes_total > MAX_LANES {
            return fail(format!(
                "lanes closed {} of {} (need 1 <= closed < total <= {MAX_LANES})",
                self.lanes_closed, self.lanes_total
            ));
        }
        if !self.milepost.is_finite() {
            return fail("non-finite milepost".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub link_id: String,
    /// Miles.
    pub length: f64,
    /// Miles from the work zone to the link's near (downstream) edge.
    pub distance_to_workzone: f64,
    /// mph.
    pub free_flow_speed: f64,
}

/// Upstream links ordered nearest-first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Corridor {
    pub links: Vec<Link>,
}

impl Corridor {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.length).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::InvalidCorridor(m));
        if self.links.is_empty() {
            return fail("no links".into());
        }
        // a tiny tolerance for floating-point sums of link lengths
        if self.total_length() < WINDOW_MILES - 1e-9 {
            return fail(format!("covers {:.3} mi, need {WINDOW_MILES}", self.total_length()));
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(MIN_LINK_MILES - 1e-9..=MAX_LINK_MILES + 1e-9).contains(&l.length) {
                return fail(format!("link {} length {:.3} outside [0.2, 0.8]", l.link_id, l.length));
            }
            if !(l.free_flow_speed > 0.0 && l.free_flow_speed <= 90.0) {
                return fail(format!("link {} free-flow speed {}", l.link_id, l.free_flow_speed));
            }
            if l.distance_to_workzone < 0.0 {
                return fail(format!("link {} has negative distance", l.link_id));
            }
            if i > 0 && l.distance_to_workzone <= self.links[i - 1].distance_to_workzone {
                return fail(format!("distance not increasing at link {}", l.link_id));
            }
            if l.distance_to_workzone >= WINDOW_MILES {
                return fail(format!("link {} starts {:.3} mi upstream, outside the window", l.link_id, l.distance_to_workzone));
            }
        }
        Ok(())
    }
}

/// One work zone with its corridor and space-time matrices (links x bins).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub event: WorkZoneEvent,
    #[serde(rename = "links")]
    pub corridor: Corridor,
    pub historical_speed: Vec<Vec<f64>>,
    pub historical_volume: Vec<Vec<f64>>,
    pub actual_speed: Vec<Vec<f64>>,
    pub incident: bool,
}

impl ScenarioRecord {
    pub fn id(&self) -> &str {
        &self.event.id
    }

    pub fn links(&self) -> usize {
        self.corridor.len()
    }

    pub fn bins(&self) -> usize {
        self.event.bins()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.event.validate()?;
        self.corridor.validate()?;
        let fail = |reason: String| Err(ScenarioError::InvalidRecord { id: self.id().to_string(), reason });
        let (h, w) = (self.links(), self.bins());
        for (name, m) in [
            ("historical_speed", &self.historical_speed),
            ("historical_volume", &self.historical_volume),
            ("actual_speed", &self.actual_speed),
        ] {
            if m.len() != h || m.iter().any(|row| row.len() != w) {
                return fail(format!("{name} is not {h}x{w}"));
            }
        }
        for (i, (hist, act)) in self.historical_speed.iter().zip(&self.actual_speed).enumerate() {
            for t in 0..w {
                if !(hist[t] > 0.0 && hist[t] <= 90.0) || !(act[t] > 0.0 && act[t] <= 90.0) {
                    return fail(format!("speed out of (0, 90] at ({i}, {t})"));
                }
                if act[t] > hist[t] + 5.0 + 1e-9 {
                    return fail(format!("actual speed exceeds historical + 5 mph at ({i}, {t})"));
                }
            }
        }
        if self.historical_volume.iter().flatten().any(|&v| !(v >= 0.0)) {
            return fail("negative volume".into());
        }
        Ok(())
    }
}

/// Generator and simulator coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// veh/h/lane at the bottleneck.
    pub lane_capacity_freeway: f64,
    pub lane_capacity_arterial: f64,
    /// Stored vehicle density inside a queue, veh/mi/lane.
    pub queue_density: f64,
    /// In-queue speed as a fraction of free-flow speed.
    pub congested_speed_factor: f64,
    /// mph.
    pub speed_floor: f64,
    /// Half-width of the uniform noise on observed speeds, mph. 0 disables it.
    pub noise_mph: f64,
    /// Half-width of the uniform noise on historical speeds, mph.
    pub historical_noise_mph: f64,
    /// Speed reduction per unit volume/capacity ratio.
    pub speed_volume_slope: f64,
    /// Off-peak volume range, veh/h/lane.
    pub base_volume_freeway: [f64; 2],
    pub base_volume_arterial: [f64; 2],
    /// Range of the peak amplitude `a` in `base * (1 + a * peak(t))`.
    pub peak_amplitude: [f64; 2],
    pub weekend_factor: f64,
    pub incident_intercept: f64,
    pub incident_severity_coef: f64,
    pub incident_lanes_coef: f64,
    /// Speed gap (mph) that counts as one unit of severity.
    pub severity_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lane_capacity_freeway: 2000.0,
            lane_capacity_arterial: 1200.0,
            queue_density: 150.0,
            congested_speed_factor: 0.25,
            speed_floor: 5.0,
            noise_mph: 3.0,
            historical_noise_mph: 0.5,
            speed_volume_slope: 0.2,
            base_volume_freeway: [350.0, 550.0],
            base_volume_arterial: [200.0, 330.0],
            peak_amplitude: [1.0, 2.4],
            weekend_factor: 0.75,
            incident_intercept: -2.2,
            incident_severity_coef: 2.5,
            incident_lanes_coef: 0.35,
            severity_scale: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn noise_free(mut self) -> Self {
        self.noise_mph = 0.0;
        self.historical_noise_mph = 0.0;
        self
    }

    pub fn lane_capacity(&self, road: RoadType) -> f64 {
        match road {
            RoadType::Freeway => self.lane_capacity_freeway,
            RoadType::Arterial => self.lane_capacity_arterial,
        }
    }
}
