use super::{
    simulate_ground_truth, Corridor, Link, RoadType, ScenarioConfig, ScenarioRecord, WorkZoneEvent, BIN_MINUTES,
    MAX_LINK_MILES, MIN_LINK_MILES, WINDOW_MILES,
};
use crate::numerics::sigmoid;
use crate::rng::SplitMix64;

/// Draws a corridor of 10-16 upstream links whose first `n - 1` links end
/// short of the 5-mile window and whose last link crosses it.
pub fn sample_corridor(rng: &mut SplitMix64, road_type: RoadType) -> Corridor {
    let n = rng.range_inclusive(10, 16) as usize;
    let nominal = WINDOW_MILES / (n as f64 - 0.5);
    let mut lengths = None;
    for _ in 0..64 {
        let raw: Vec<f64> = (0..n).map(|_| nominal * rng.uniform(0.7, 1.3)).collect();
        let total: f64 = raw.iter().sum();
        // scale so the window boundary falls inside the last link
        let u = rng.uniform(0.05, 0.95);
        let s = WINDOW_MILES / (total - u * raw[n - 1]);
        let scaled: Vec<f64> = raw.iter().map(|l| l * s).collect();
        if scaled.iter().all(|l| (MIN_LINK_MILES..=MAX_LINK_MILES).contains(l)) {
            lengths = Some(scaled);
            break;
        }
    }
    let lengths = lengths.unwrap_or_else(|| vec![nominal; n]);

    let (lo, hi) = match road_type {
        RoadType::Freeway => (55.0, 70.0),
        RoadType::Arterial => (35.0, 50.0),
    };
    let centre = rng.uniform(lo, hi);
    let mut distance = 0.0;
    let links = lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| {
            let link = Link {
                link_id: format!("L{i:02}"),
                length,
                distance_to_workzone: distance,
                free_flow_speed: (centre + rng.uniform(-2.0, 2.0)).clamp(lo, hi),
            };
            distance += length;
            link
        })
        .collect();
    Corridor { links }
}

fn quarter_hours(rng: &mut SplitMix64, lo_minutes: u32, hi_minutes: u32) -> u32 {
    let (lo, hi) = (lo_minutes / BIN_MINUTES, hi_minutes / BIN_MINUTES);
    rng.range_inclusive(lo as i64, hi as i64) as u32 * BIN_MINUTES
}

/// Draws a lane-closure event. Most closures last 4-12 hours; a fifth are
/// drawn from the full 1h-23h45 range. Start times favour night and mid-day
/// maintenance windows.
pub fn sample_workzone(rng: &mut SplitMix64, id: &str) -> WorkZoneEvent {
    let road_type = if rng.bernoulli(0.65) { RoadType::Freeway } else { RoadType::Arterial };
    let start_time = match rng.unit() {
        u if u < 0.4 => quarter_hours(rng, 19 * 60, 23 * 60 + 45),
        u if u < 0.8 => quarter_hours(rng, 6 * 60, 14 * 60),
        _ => quarter_hours(rng, 0, 23 * 60 + 45),
    };
    let duration = if rng.bernoulli(0.8) {
        quarter_hours(rng, 4 * 60, 12 * 60)
    } else {
        quarter_hours(rng, 60, 23 * 60 + 45)
    };
    let lanes_total = match road_type {
        RoadType::Freeway => rng.range_inclusive(2, 5),
        RoadType::Arterial => rng.range_inclusive(2, 4),
    } as u8;
    let lanes_closed = if rng.bernoulli(0.7) {
        1
    } else {
        rng.range_inclusive(1, lanes_total as i64 - 1) as u8
    };
    WorkZoneEvent {
        id: id.to_string(),
        start_time,
        end_time: start_time + duration,
        day_of_week: rng.below(7) as u8,
        lanes_closed,
        lanes_total,
        road_type,
        has_on_ramp: rng.bernoulli(0.5),
        has_off_ramp: rng.bernoulli(0.5),
        milepost: rng.uniform(0.0, 100.0),
    }
}

/// Scenario-level demand shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileShape {
    /// Off-peak volume, veh/h/lane.
    pub base_volume: f64,
    /// Peak amplitude `a`.
    pub amplitude: f64,
    /// Per-link volume multipliers.
    pub link_factors: Vec<f64>,
}

impl ProfileShape {
    pub fn sample(corridor: &Corridor, event: &WorkZoneEvent, config: &ScenarioConfig, rng: &mut SplitMix64) -> Self {
        let [lo, hi] = match event.road_type {
            RoadType::Freeway => config.base_volume_freeway,
            RoadType::Arterial => config.base_volume_arterial,
        };
        let weekend = if event.day_of_week >= 5 { config.weekend_factor } else { 1.0 };
        Self {
            base_volume: rng.uniform(lo, hi) * weekend,
            amplitude: rng.uniform(config.peak_amplitude[0], config.peak_amplitude[1]),
            link_factors: (0..corridor.len()).map(|_| rng.uniform(0.95, 1.05)).collect(),
        }
    }
}

/// Historical speed and volume matrices, links x bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Profiles {
    pub speed: Vec<Vec<f64>>,
    pub volume: Vec<Vec<f64>>,
}

/// Daily demand shape in hours since midnight: a daytime plateau plus
/// morning (8:00) and evening (17:30) peaks.
pub(crate) fn peak(hour: f64) -> f64 {
    let h = hour.rem_euclid(24.0);
    let plateau = sigmoid(2.0 * (h - 6.0)) * sigmoid(2.0 * (21.0 - h));
    let bump = |centre: f64, width: f64| {
        let d = (h - centre).abs().min(24.0 - (h - centre).abs());
        (-0.5 * (d / width).powi(2)).exp()
    };
    0.5 * plateau + bump(8.0, 1.0) + bump(17.5, 1.25)
}

/// Hour of day at the centre of bin `k`.
pub(crate) fn bin_hour(event: &WorkZoneEvent, k: usize) -> f64 {
    (event.start_time as f64 + (k as f64 + 0.5) * BIN_MINUTES as f64) / 60.0
}

pub fn historical_profiles(
    corridor: &Corridor,
    event: &WorkZoneEvent,
    config: &ScenarioConfig,
    rng: &mut SplitMix64,
) -> Profiles {
    let shape = ProfileShape::sample(corridor, event, config, rng);
    historical_profiles_with(corridor, event, &shape, config, rng)
}

/// `volume = base * f_i * (1 + a * peak(t))`,
/// `speed = ffs_i * (1 - b * volume / capacity) + noise`.
pub fn historical_profiles_with(
    corridor: &Corridor,
    event: &WorkZoneEvent,
    shape: &ProfileShape,
    config: &ScenarioConfig,
    rng: &mut SplitMix64,
) -> Profiles {
    let bins = event.bins();
    let capacity = config.lane_capacity(event.road_type);
    let mut speed = Vec::with_capacity(corridor.len());
    let mut volume = Vec::with_capacity(corridor.len());
    for (link, &f) in corridor.links.iter().zip(&shape.link_factors) {
        let mut vrow = Vec::with_capacity(bins);
        let mut srow = Vec::with_capacity(bins);
        for k in 0..bins {
            let v = (shape.base_volume * f * (1.0 + shape.amplitude * peak(bin_hour(event, k)))).max(0.0);
            let mut s = link.free_flow_speed * (1.0 - config.speed_volume_slope * v / capacity);
            if config.historical_noise_mph > 0.0 {
                s += rng.uniform(-config.historical_noise_mph, config.historical_noise_mph);
            }
            vrow.push(v);
            srow.push(s.clamp(config.speed_floor, 90.0));
        }
        volume.push(vrow);
        speed.push(srow);
    }
    Profiles { speed, volume }
}

/// `sigmoid(a0 + a1 * severity + a2 * lanes_closed)`.
pub fn incident_probability(event: &WorkZoneEvent, severity: f64, config: &ScenarioConfig) -> f64 {
    sigmoid(
        config.incident_intercept
            + config.incident_severity_coef * severity
            + config.incident_lanes_coef * event.lanes_closed as f64,
    )
}

/// Bernoulli draw at [`incident_probability`]. `severity` is the mean
/// historical-minus-actual speed gap divided by the configured scale.
pub fn incident_label(event: &WorkZoneEvent, severity: f64, config: &ScenarioConfig, rng: &mut SplitMix64) -> bool {
    rng.bernoulli(incident_probability(event, severity, config))
}

/// Mean speed gap over all cells, in units of `severity_scale`.
pub(crate) fn severity(hist: &[Vec<f64>], actual: &[Vec<f64>], config: &ScenarioConfig) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (h, a) in hist.iter().zip(actual) {
        for (x, y) in h.iter().zip(a) {
            sum += x - y;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64 / config.severity_scale
    }
}

/// One complete scenario from a dedicated generator stream.
pub fn generate_scenario(id: &str, config: &ScenarioConfig, rng: &mut SplitMix64) -> ScenarioRecord {
    let event = sample_workzone(rng, id);
    let corridor = sample_corridor(rng, event.road_type);
    let profiles = historical_profiles(&corridor, &event, config, rng);
    let truth = simulate_ground_truth(&corridor, &event, &profiles, config, rng);
    let sev = severity(&profiles.speed, &truth.actual_speed, config);
    let incident = incident_label(&event, sev, config, rng);
    ScenarioRecord {
        event,
        corridor,
        historical_speed: profiles.speed,
        historical_volume: profiles.volume,
        actual_speed: truth.actual_speed,
        incident,
    }
}
