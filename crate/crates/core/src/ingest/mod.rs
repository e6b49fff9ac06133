//! Work-zone feed, link metadata and speed readings into scenario records.
//!
//! Mileposts increase in the direction of travel for northbound and
//! eastbound roads and decrease for southbound and westbound ones, so
//! "upstream" of a work zone means lower mileposts for N/E and higher for S/W.

mod binning;

pub use binning::{bin_readings, fill_gaps, floor_to_bin};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{
    Corridor, Link, RoadType, ScenarioError, ScenarioRecord, WorkZoneEvent, BIN_MINUTES,
};

pub const SPEED_HEADER: [&str; 3] = ["link_id", "timestamp", "speed_mph"];
pub const LINK_HEADER: [&str; 6] = ["link_id", "road_name", "direction", "begin_milepost", "end_milepost", "length_miles"];
pub const INCIDENT_HEADER: [&str; 1] = ["event_id"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed event JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{file}: expected header `{expected}`, found `{found}`")]
    Header { file: &'static str, expected: String, found: String },
    #[error("{file}: {message}")]
    Csv { file: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Upstream extent of the link window, miles.
    pub window_miles: f64,
    /// Longest run of empty bins that is linearly interpolated.
    pub max_gap_bins: usize,
    /// veh/h/lane written to the volume channel (readings carry no volume).
    pub volume_default: f64,
    /// Same-weekday reference days needed before historical means are
    /// stratified by weekday.
    pub min_weekday_days: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { window_miles: 5.0, max_gap_bins: 2, volume_default: 1000.0, min_weekday_days: 3 }
    }
}

/// An event or row that was dropped, with the reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub source: String,
    pub id: String,
    pub reason: String,
}

impl fmt::Display for Skipped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.source, self.id, self.reason)
    }
}

fn skip(source: &str, id: impl Into<String>, reason: impl Into<String>) -> Skipped {
    let s = Skipped { source: source.to_string(), id: id.into(), reason: reason.into() };
    log::warn!("skipped {s}");
    s
}

/// Parsed rows plus the rows that were dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub skipped: Vec<Skipped>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Mileposts increase along travel (N, E).
    Increasing,
    /// Mileposts decrease along travel (S, W).
    Decreasing,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().chars().next().map(|c| c.to_ascii_uppercase()) {
            Some('N' | 'E') => Some(Direction::Increasing),
            Some('S' | 'W') => Some(Direction::Decreasing),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedReading {
    pub link_id: String,
    pub timestamp: DateTime<Utc>,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMeta {
    pub link_id: String,
    pub road_name: String,
    pub direction: String,
    pub begin_milepost: f64,
    pub end_milepost: f64,
    pub length: f64,
}

/// A feed event with its roadway and absolute (bin-aligned) start.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedEvent {
    pub event: WorkZoneEvent,
    pub road_name: String,
    pub direction: Direction,
    pub start: DateTime<Utc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    id: String,
    road_name: String,
    direction: String,
    begin_milepost: f64,
    start_date: String,
    end_date: String,
    lanes_total: u8,
    lanes_closed: u8,
    road_type: RoadType,
    has_on_ramp: bool,
    has_off_ramp: bool,
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|t| t.with_timezone(&Utc))
}

fn event_reason(e: ScenarioError) -> String {
    match e {
        ScenarioError::InvalidEvent { reason, .. } => reason,
        other => other.to_string(),
    }
}

fn convert_event(raw: RawEvent) -> std::result::Result<FeedEvent, String> {
    let direction = Direction::parse(&raw.direction).ok_or_else(|| format!("unknown direction {:?}", raw.direction))?;
    let start = parse_timestamp(&raw.start_date).ok_or_else(|| format!("bad start_date {:?}", raw.start_date))?;
    let end = parse_timestamp(&raw.end_date).ok_or_else(|| format!("bad end_date {:?}", raw.end_date))?;
    if end <= start {
        return Err("end_date is not after start_date".into());
    }
    // closures are widened outward to whole bins
    let start = floor_to_bin(start);
    let mut end_aligned = floor_to_bin(end);
    if end_aligned < end {
        end_aligned += Duration::minutes(BIN_MINUTES as i64);
    }
    let start_time = start.hour() * 60 + start.minute();
    let minutes = (end_aligned - start).num_minutes();
    let end_time = u32::try_from(start_time as i64 + minutes).map_err(|_| "event too long".to_string())?;
    let event = WorkZoneEvent {
        id: raw.id,
        start_time,
        end_time,
        day_of_week: start.weekday().num_days_from_monday() as u8,
        lanes_closed: raw.lanes_closed,
        lanes_total: raw.lanes_total,
        road_type: raw.road_type,
        has_on_ramp: raw.has_on_ramp,
        has_off_ramp: raw.has_off_ramp,
        milepost: raw.begin_milepost,
    };
    event.validate().map_err(event_reason)?;
    Ok(FeedEvent { event, road_name: raw.road_name, direction, start })
}

/// Parses a JSON array of feed events. Invalid events are skipped.
pub fn parse_events(json: &[u8]) -> Result<Parsed<FeedEvent>> {
    let values: Vec<serde_json::Value> = serde_json::from_slice(json)
        .map_err(|e| IngestError::Json { line: e.line(), column: e.column(), message: e.to_string() })?;
    let mut parsed = Parsed { rows: Vec::new(), skipped: Vec::new() };
    for (i, v) in values.into_iter().enumerate() {
        let id = v.get("id").and_then(|x| x.as_str()).map_or_else(|| format!("#{i}"), str::to_string);
        match serde_json::from_value::<RawEvent>(v).map_err(|e| e.to_string()).and_then(convert_event) {
            Ok(e) => parsed.rows.push(e),
            Err(reason) => parsed.skipped.push(skip("event", id, reason)),
        }
    }
    Ok(parsed)
}

fn csv_rows(bytes: &[u8], file: &'static str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let found = reader.headers().map_err(|e| IngestError::Csv { file, message: e.to_string() })?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(IngestError::Header {
            file,
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, r) in reader.records().enumerate() {
        // header is line 1
        let r = r.map_err(|e| IngestError::Csv { file, message: e.to_string() })?;
        rows.push((i + 2, r));
    }
    Ok(rows)
}

fn field<'a>(r: &'a csv::StringRecord, i: usize) -> std::result::Result<&'a str, String> {
    r.get(i).map(str::trim).ok_or_else(|| format!("missing column {}", i + 1))
}

fn number(r: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let s = field(r, i)?;
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("bad {name} {s:?}"))
}

pub fn parse_speeds(csv: &[u8]) -> Result<Parsed<SpeedReading>> {
    let mut parsed = Parsed { rows: Vec::new(), skipped: Vec::new() };
    for (line, r) in csv_rows(csv, "speeds", &SPEED_HEADER)? {
        let row = (|| {
            let link_id = field(&r, 0)?.to_string();
            let ts = field(&r, 1)?;
            let timestamp = parse_timestamp(ts).ok_or_else(|| format!("bad timestamp {ts:?}"))?;
            let speed = number(&r, 2, "speed")?;
            if !(speed > 0.0 && speed <= 120.0) {
                return Err(format!("speed {speed} outside (0, 120]"));
            }
            Ok(SpeedReading { link_id, timestamp, speed })
        })();
        match row {
            Ok(v) => parsed.rows.push(v),
            Err(reason) => parsed.skipped.push(skip("speeds", format!("line {line}"), reason)),
        }
    }
    Ok(parsed)
}

pub fn parse_links(csv: &[u8]) -> Result<Parsed<LinkMeta>> {
    let mut parsed = Parsed { rows: Vec::new(), skipped: Vec::new() };
    for (line, r) in csv_rows(csv, "links", &LINK_HEADER)? {
        let row = (|| {
            let m = LinkMeta {
                link_id: field(&r, 0)?.to_string(),
                road_name: field(&r, 1)?.to_string(),
                direction: field(&r, 2)?.to_string(),
                begin_milepost: number(&r, 3, "begin_milepost")?,
                end_milepost: number(&r, 4, "end_milepost")?,
                length: number(&r, 5, "length_miles")?,
            };
            let span = m.end_milepost - m.begin_milepost;
            if span <= 0.0 {
                return Err(format!("end milepost {} not after begin {}", m.end_milepost, m.begin_milepost));
            }
            if (m.length - span).abs() > 0.1 * span {
                return Err(format!("length {} disagrees with milepost span {span:.3}", m.length));
            }
            if Direction::parse(&m.direction).is_none() {
                return Err(format!("unknown direction {:?}", m.direction));
            }
            Ok(m)
        })();
        match row {
            Ok(v) => parsed.rows.push(v),
            Err(reason) => parsed.skipped.push(skip("links", format!("line {line}"), reason)),
        }
    }
    Ok(parsed)
}

/// Event ids with a recorded incident.
pub fn parse_incidents(csv: &[u8]) -> Result<BTreeSet<String>> {
    Ok(csv_rows(csv, "incidents", &INCIDENT_HEADER)?
        .into_iter()
        .filter_map(|(_, r)| r.get(0).map(|s| s.trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect())
}

/// Links of the event's roadway whose near edge lies within the window
/// upstream of the work zone, nearest first, with their distances.
pub fn upstream_links<'a>(
    event: &FeedEvent,
    links: &'a [LinkMeta],
    window_miles: f64,
) -> std::result::Result<Vec<(&'a LinkMeta, f64)>, String> {
    let m = event.event.milepost;
    let mut seen = BTreeSet::new();
    let mut picked: Vec<(&LinkMeta, f64)> = links
        .iter()
        .filter(|l| l.road_name == event.road_name && Direction::parse(&l.direction) == Some(event.direction))
        .filter(|l| seen.insert(l.link_id.as_str()))
        .filter_map(|l| {
            let d = match event.direction {
                Direction::Increasing => m - l.end_milepost,
                Direction::Decreasing => l.begin_milepost - m,
            };
            // links touching the work zone sit at distance 0
            let d = if d.abs() < 1e-9 { 0.0 } else { d };
            (d >= 0.0 && d < window_miles).then_some((l, d))
        })
        .collect();
    picked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.link_id.cmp(&b.0.link_id)));
    if picked.is_empty() {
        return Err(format!("no upstream links within {window_miles} miles"));
    }
    if let Some(w) = picked.windows(2).find(|w| w[1].1 - w[0].1 < 1e-9) {
        return Err(format!("links {} and {} overlap", w[0].0.link_id, w[1].0.link_id));
    }
    Ok(picked)
}

/// Result of matching a feed against links and readings.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestOutput {
    /// Ordered by event id.
    pub records: Vec<ScenarioRecord>,
    pub skipped: Vec<Skipped>,
    /// Cells whose speeds were clamped into the record invariants.
    pub clamped_cells: usize,
}

type Series<'a> = &'a [(DateTime<Utc>, f64)];

/// Historical per-bin means over reference days: every date with readings
/// except the event's own date, restricted to the event's weekday when
/// enough such days exist.
fn historical_series(readings: Series, event: &FeedEvent, bins: usize, config: &IngestConfig) -> Option<Vec<Option<f64>>> {
    let event_date = event.start.date_naive();
    let mut days: BTreeSet<NaiveDate> = readings.iter().map(|(t, _)| t.date_naive()).collect();
    days.remove(&event_date);
    let same: Vec<NaiveDate> = days.iter().copied().filter(|d| d.weekday() == event_date.weekday()).collect();
    let days: Vec<NaiveDate> = if same.len() >= config.min_weekday_days { same } else { days.into_iter().collect() };
    let offset = event.start - event_date.and_hms_opt(0, 0, 0)?.and_utc();
    let mut sums = vec![(0.0, 0usize); bins];
    for day in days {
        let t0 = day.and_hms_opt(0, 0, 0)?.and_utc() + offset;
        for (k, v) in bin_readings(readings, t0, bins).into_iter().enumerate() {
            if let Some(v) = v {
                sums[k].0 += v;
                sums[k].1 += 1;
            }
        }
    }
    Some(sums.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
}

fn build_record(
    event: &FeedEvent,
    links: &[LinkMeta],
    by_link: &BTreeMap<&str, Vec<(DateTime<Utc>, f64)>>,
    incidents: &BTreeSet<String>,
    config: &IngestConfig,
    clamped: &mut usize,
) -> std::result::Result<ScenarioRecord, String> {
    let picked = upstream_links(event, links, config.window_miles)?;
    let bins = event.event.bins();
    let empty = Vec::new();
    let (mut corridor, mut hist, mut actual) = (Vec::new(), Vec::new(), Vec::new());
    for (meta, distance) in picked {
        let series = by_link.get(meta.link_id.as_str()).unwrap_or(&empty);
        let a = fill_gaps(&bin_readings(series, event.start, bins), config.max_gap_bins)
            .map_err(|g| format!("link {}: {g} on the event day", meta.link_id))?;
        let h = historical_series(series, event, bins, config).unwrap_or_else(|| vec![None; bins]);
        let h = fill_gaps(&h, config.max_gap_bins)
            .map_err(|g| format!("link {}: {g} in the historical reference days", meta.link_id))?;
        let mut h_row = Vec::with_capacity(bins);
        let mut a_row = Vec::with_capacity(bins);
        for (hv, av) in h.into_iter().zip(a) {
            let hc = hv.min(90.0);
            let ac = av.min(90.0).min(hc + 5.0);
            *clamped += usize::from(hc != hv) + usize::from(ac != av);
            h_row.push(hc);
            a_row.push(ac);
        }
        let free_flow_speed = h_row.iter().copied().fold(0.0, f64::max);
        corridor.push(Link { link_id: meta.link_id.clone(), length: meta.length, distance_to_workzone: distance, free_flow_speed });
        hist.push(h_row);
        actual.push(a_row);
    }
    let record = ScenarioRecord {
        event: event.event.clone(),
        corridor: Corridor { links: corridor },
        historical_volume: vec![vec![config.volume_default; bins]; hist.len()],
        historical_speed: hist,
        actual_speed: actual,
        incident: incidents.contains(&event.event.id),
    };
    record.validate().map_err(|e| match e {
        ScenarioError::InvalidEvent { reason, .. } | ScenarioError::InvalidRecord { reason, .. } => reason,
        other => other.to_string(),
    })?;
    Ok(record)
}

/// Spatial matching and temporal binning of every event.
pub fn match_and_bin(
    events: &[FeedEvent],
    links: &[LinkMeta],
    readings: &[SpeedReading],
    incidents: &BTreeSet<String>,
    config: &IngestConfig,
) -> IngestOutput {
    let mut by_link: BTreeMap<&str, Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
    for r in readings {
        by_link.entry(r.link_id.as_str()).or_default().push((r.timestamp, r.speed));
    }
    by_link.values_mut().for_each(|v| v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))));

    let mut sorted: Vec<&FeedEvent> = events.iter().collect();
    sorted.sort_by(|a, b| a.event.id.cmp(&b.event.id));
    let mut out = IngestOutput { records: Vec::new(), skipped: Vec::new(), clamped_cells: 0 };
    let mut ids = BTreeSet::new();
    for e in sorted {
        if !ids.insert(e.event.id.as_str()) {
            out.skipped.push(skip("event", e.event.id.clone(), "duplicate event id"));
            continue;
        }
        match build_record(e, links, &by_link, incidents, config, &mut out.clamped_cells) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.skipped.push(skip("event", e.event.id.clone(), reason)),
        }
    }
    if out.clamped_cells > 0 {
        log::warn!("clamped {} speed cells into the record invariants", out.clamped_cells);
    }
    out
}
