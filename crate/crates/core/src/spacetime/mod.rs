//! Fixed-canvas model samples built from scenario records.
//!
//! Rows are upstream links (nearest first), columns are 15-minute bins from
//! the closure start. Real cells sit in the top-left rectangle; the rest is
//! zero padding with mask 0.

mod render;

pub use render::{colormap, render_heatmap, PpmImage};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{RoadType, ScenarioRecord, WorkZoneEvent, MAX_LANES};

#[derive(Debug, Error, PartialEq)]
pub enum SpacetimeError {
    #[error("scenario {id} has {links} links, canvas holds {max}")]
    TooManyLinks { id: String, links: usize, max: usize },
    #[error("scenario {id} has {bins} time bins, canvas holds {max}")]
    TooManyBins { id: String, bins: usize, max: usize },
    #[error("invalid canvas: {0}")]
    Canvas(String),
    #[error("value {value} at cell {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, SpacetimeError>;

pub const WZ_FEATURES: usize = 8;
pub const WZ_VECTOR_VERSION: u32 = 1;
pub const WZ_FEATURE_NAMES: [&str; WZ_FEATURES] = [
    "start_time_of_day",
    "day_of_week",
    "duration",
    "lanes_closed",
    "lanes_total",
    "road_type",
    "has_on_ramp",
    "has_off_ramp",
];

/// Canvas geometry and the pinned normalisation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpacetimeConfig {
    pub height: usize,
    pub width: usize,
    /// mph.
    pub speed_max: f64,
    /// veh/h/lane.
    pub volume_max: f64,
    /// miles.
    pub length_max: f64,
    /// miles.
    pub distance_max: f64,
    /// Adds "minutes since start" and "minutes until end" channels.
    pub time_channels: bool,
}

impl Default for SpacetimeConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 96,
            speed_max: 80.0,
            volume_max: 2400.0,
            length_max: 0.8,
            distance_max: 5.0,
            time_channels: false,
        }
    }
}

impl SpacetimeConfig {
    pub fn channels(&self) -> usize {
        if self.time_channels {
            6
        } else {
            4
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        let mut names = vec!["historical_speed", "historical_volume", "link_length", "distance_to_workzone"];
        if self.time_channels {
            names.extend(["time_since_start", "time_until_end"]);
        }
        names.into_iter().map(String::from).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(SpacetimeError::Canvas(format!(
                "{}x{} must be positive and divisible by 4",
                self.height, self.width
            )));
        }
        for (name, v) in [
            ("speed_max", self.speed_max),
            ("volume_max", self.volume_max),
            ("length_max", self.length_max),
            ("distance_max", self.distance_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SpacetimeError::Canvas(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn normalize_speed(&self, mph: f64) -> f64 {
        normalize_speed(mph, self.speed_max)
    }

    pub fn denormalize_speed(&self, u: f64) -> f64 {
        denormalize_speed(u, self.speed_max)
    }
}

/// `clip(v / s_max, 0, 1)`.
pub fn normalize_speed(mph: f64, s_max: f64) -> f64 {
    (mph / s_max).clamp(0.0, 1.0)
}

pub fn denormalize_speed(u: f64, s_max: f64) -> f64 {
    u * s_max
}

/// `h x w x c` image, channel-last, with an `h x w` validity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub mask: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl SpaceTimeImage {
    #[inline]
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// One channel as a row-major `h x w` plane.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.data.iter().skip(channel).step_by(self.channels).copied().collect()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkZoneFeatureVector {
    pub values: [f64; WZ_FEATURES],
}

/// A model-ready sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x_image: SpaceTimeImage,
    pub x_wz: WorkZoneFeatureVector,
    /// Normalised actual speed, `h x w`, zero on padding.
    pub y_speed: Vec<f64>,
    pub mask: Vec<f64>,
    pub y_incident: u8,
    /// Real extent of the content rectangle.
    pub links: usize,
    pub bins: usize,
    /// Miles, one per real link.
    pub link_lengths: Vec<f64>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.x_image.height
    }

    pub fn width(&self) -> usize {
        self.x_image.width
    }

    /// Normalised historical speed plane (input channel 0).
    pub fn historical(&self) -> Vec<f64> {
        self.x_image.channel(0)
    }
}

fn check_extent(record: &ScenarioRecord, config: &SpacetimeConfig) -> Result<()> {
    config.validate()?;
    if record.links() > config.height {
        return Err(SpacetimeError::TooManyLinks {
            id: record.id().to_string(),
            links: record.links(),
            max: config.height,
        });
    }
    if record.bins() > config.width {
        return Err(SpacetimeError::TooManyBins {
            id: record.id().to_string(),
            bins: record.bins(),
            max: config.width,
        });
    }
    let (h, w) = (record.links(), record.bins());
    for m in [&record.historical_speed, &record.historical_volume, &record.actual_speed] {
        if m.len() != h || m.iter().any(|r| r.len() != w) {
            return Err(SpacetimeError::Shape(format!("scenario {} matrices are not {h}x{w}", record.id())));
        }
    }
    Ok(())
}

fn build_mask(links: usize, bins: usize, config: &SpacetimeConfig) -> Vec<f64> {
    let mut mask = vec![0.0; config.height * config.width];
    for r in 0..links {
        mask[r * config.width..r * config.width + bins].fill(1.0);
    }
    mask
}

pub fn build_input_image(record: &ScenarioRecord, config: &SpacetimeConfig) -> Result<SpaceTimeImage> {
    check_extent(record, config)?;
    let (w, c) = (config.width, config.channels());
    let mut data = vec![0.0; config.height * w * c];
    let duration = record.event.duration() as f64;
    for (r, link) in record.corridor.links.iter().enumerate() {
        for t in 0..record.bins() {
            let cell = &mut data[(r * w + t) * c..(r * w + t + 1) * c];
            cell[0] = (record.historical_speed[r][t] / config.speed_max).clamp(0.0, 1.0);
            cell[1] = (record.historical_volume[r][t] / config.volume_max).clamp(0.0, 1.0);
            cell[2] = (link.length / config.length_max).clamp(0.0, 1.0);
            cell[3] = (link.distance_to_workzone / config.distance_max).clamp(0.0, 1.0);
            if config.time_channels {
                let since = t as f64 * 15.0;
                cell[4] = since / 1440.0;
                cell[5] = (duration - since) / 1440.0;
            }
        }
    }
    Ok(SpaceTimeImage {
        height: config.height,
        width: w,
        channels: c,
        data,
        mask: build_mask(record.links(), record.bins(), config),
        channel_names: config.channel_names(),
    })
}

pub fn build_wz_vector(event: &WorkZoneEvent) -> WorkZoneFeatureVector {
    let lanes = MAX_LANES as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    WorkZoneFeatureVector {
        values: [
            event.start_time as f64 / 1440.0,
            event.day_of_week as f64 / 6.0,
            event.duration() as f64 / 1440.0,
            event.lanes_closed as f64 / lanes,
            event.lanes_total as f64 / lanes,
            flag(event.road_type == RoadType::Arterial),
            flag(event.has_on_ramp),
            flag(event.has_off_ramp),
        ],
    }
}

/// Normalised actual speeds on the canvas and the incident label.
pub fn build_target(record: &ScenarioRecord, config: &SpacetimeConfig) -> Result<(Vec<f64>, u8)> {
    check_extent(record, config)?;
    let mut y = vec![0.0; config.height * config.width];
    for (r, row) in record.actual_speed.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            y[r * config.width + t] = normalize_speed(v, config.speed_max);
        }
    }
    Ok((y, record.incident as u8))
}

pub fn build_sample(record: &ScenarioRecord, config: &SpacetimeConfig) -> Result<Sample> {
    let x_image = build_input_image(record, config)?;
    let (y_speed, y_incident) = build_target(record, config)?;
    Ok(Sample {
        id: record.id().to_string(),
        mask: x_image.mask.clone(),
        x_image,
        x_wz: build_wz_vector(&record.event),
        y_speed,
        y_incident,
        links: record.links(),
        bins: record.bins(),
        link_lengths: record.corridor.lengths(),
    })
}

pub fn build_samples<'a, I>(records: I, config: &SpacetimeConfig) -> Result<Vec<Sample>>
where
    I: IntoIterator<Item = &'a ScenarioRecord>,
{
    records.into_iter().map(|r| build_sample(r, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn record(seed: u64) -> ScenarioRecord {
        generate_scenario("s", &ScenarioConfig::default(), &mut seeded_rng(seed, 1))
    }

    #[test]
    fn mask_is_top_left_rectangle() {
        let r = record(3);
        let config = SpacetimeConfig::default();
        let img = build_input_image(&r, &config).unwrap();
        for row in 0..16 {
            for col in 0..96 {
                let inside = row < r.links() && col < r.bins();
                assert_eq!(img.mask[row * 96 + col], inside as u8 as f64);
                if !inside {
                    assert!((0..4).all(|c| img.at(row, col, c) == 0.0));
                }
            }
        }
    }

    #[test]
    fn speed_normalisation() {
        assert_eq!(normalize_speed(65.0, 80.0), 0.8125);
        assert_eq!(normalize_speed(80.0, 80.0), 1.0);
        assert_eq!(normalize_speed(0.0, 80.0), 0.0);
        assert_eq!(normalize_speed(56.0, 80.0), 0.7);
        assert_eq!(normalize_speed(5.0, 80.0), 0.0625);
        assert_eq!(normalize_speed(95.0, 80.0), 1.0);
    }

    #[test]
    fn channels_round_trip() {
        let r = record(8);
        let config = SpacetimeConfig::default();
        let img = build_input_image(&r, &config).unwrap();
        for (i, link) in r.corridor.links.iter().enumerate() {
            for t in 0..r.bins() {
                let s = config.denormalize_speed(img.at(i, t, 0));
                assert!((s - r.historical_speed[i][t]).abs() <= 1e-6 * r.historical_speed[i][t]);
                assert!((img.at(i, t, 2) * 0.8 - link.length).abs() < 1e-12);
                assert!((img.at(i, t, 3) * 5.0 - link.distance_to_workzone).abs() < 1e-12);
            }
        }
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_oversized_scenarios() {
        let mut r = record(1);
        let config = SpacetimeConfig { height: 8, ..SpacetimeConfig::default() };
        let err = build_input_image(&r, &config).unwrap_err();
        assert!(matches!(err, SpacetimeError::TooManyLinks { max: 8, .. }));
        r.event.end_time = r.event.start_time + 100 * 15;
        let err = build_input_image(&r, &SpacetimeConfig::default()).unwrap_err();
        assert!(matches!(err, SpacetimeError::TooManyBins { bins: 100, max: 96, .. }));
    }

    #[test]
    fn wz_vector_scaling() {
        let mut e = record(2).event;
        e.start_time = 480;
        e.lanes_closed = 2;
        let v = build_wz_vector(&e);
        assert!((v.values[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v.values[3] - 1.0 / 3.0).abs() < 1e-15);
        e.start_time = 0;
        assert_eq!(build_wz_vector(&e).values[0], 0.0);
        assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn free_flow_target_equals_input() {
        let config = ScenarioConfig::default().noise_free();
        let mut r = generate_scenario("s", &config, &mut seeded_rng(5, 1));
        r.actual_speed = r.historical_speed.clone();
        let s = build_sample(&r, &SpacetimeConfig::default()).unwrap();
        let hist = s.historical();
        for i in 0..s.y_speed.len() {
            assert_eq!(s.y_speed[i] * s.mask[i], hist[i] * s.mask[i]);
            if s.mask[i] == 0.0 {
                assert_eq!(s.y_speed[i], 0.0);
            }
        }
    }

    #[test]
    fn time_channels_optional() {
        let r = record(4);
        let config = SpacetimeConfig { time_channels: true, ..SpacetimeConfig::default() };
        let img = build_input_image(&r, &config).unwrap();
        assert_eq!(img.channels, 6);
        assert_eq!(img.at(0, 0, 4), 0.0);
        assert!((img.at(0, 0, 5) - r.event.duration() as f64 / 1440.0).abs() < 1e-15);
    }
}
