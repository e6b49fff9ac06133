use super::{Corridor, Profiles, ScenarioConfig, WorkZoneEvent, BIN_MINUTES};
use crate::rng::SplitMix64;

/// Observed speeds plus the queue trace that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub actual_speed: Vec<Vec<f64>>,
    /// Vehicles stored in the queue at the end of each bin.
    pub queue_vehicles: Vec<f64>,
    /// Spatial extent of the queue at the end of each bin, miles.
    pub queue_miles: Vec<f64>,
    /// First bin whose demand exceeds the reduced capacity.
    pub first_oversaturated_bin: Option<usize>,
}

impl GroundTruth {
    /// Sum over bins of the queue extent.
    pub fn queue_time(&self) -> f64 {
        self.queue_miles.iter().sum()
    }

    pub fn max_queue_miles(&self) -> f64 {
        self.queue_miles.iter().copied().fold(0.0, f64::max)
    }
}

/// Point-queue bottleneck at the work zone.
///
/// Demand is the historical per-lane volume of link 0 times the lane count.
/// Reduced capacity is `c * open / total`. The stored queue
/// `Q(k+1) = max(0, Q(k) + (d - c_r) * dt)` is projected upstream at
/// `queue_density` veh/mi/lane; links whose near edge lies inside the queue
/// run at `max(floor, factor * free_flow)`. With `noise_mph > 0` each cell
/// gets uniform noise, then is clamped to `[floor, hist + 5]`.
pub fn simulate_ground_truth(
    corridor: &Corridor,
    event: &WorkZoneEvent,
    profiles: &Profiles,
    config: &ScenarioConfig,
    rng: &mut SplitMix64,
) -> GroundTruth {
    let bins = event.bins();
    let total = event.lanes_total as f64;
    let reduced = config.lane_capacity(event.road_type) * event.lanes_open() as f64;
    let dt = BIN_MINUTES as f64 / 60.0;
    let per_mile = config.queue_density * total;

    let mut queue = 0.0;
    let mut queue_vehicles = Vec::with_capacity(bins);
    let mut queue_miles = Vec::with_capacity(bins);
    let mut first = None;
    for k in 0..bins {
        let demand = profiles.volume[0][k] * total;
        if demand > reduced && first.is_none() {
            first = Some(k);
        }
        queue = (queue + (demand - reduced) * dt).max(0.0);
        queue_vehicles.push(queue);
        queue_miles.push(queue / per_mile);
    }

    let mut actual = profiles.speed.clone();
    for (link, row) in corridor.links.iter().zip(actual.iter_mut()) {
        let congested = (config.congested_speed_factor * link.free_flow_speed).max(config.speed_floor);
        for (k, v) in row.iter_mut().enumerate() {
            if queue_miles[k] > link.distance_to_workzone {
                *v = congested.min(*v);
            }
        }
    }
    if config.noise_mph > 0.0 {
        for (hist, row) in profiles.speed.iter().zip(actual.iter_mut()) {
            for (h, v) in hist.iter().zip(row.iter_mut()) {
                let noisy = *v + rng.uniform(-config.noise_mph, config.noise_mph);
                *v = noisy.min(h + 5.0).max(config.speed_floor);
            }
        }
    }
    GroundTruth { actual_speed: actual, queue_vehicles, queue_miles, first_oversaturated_bin: first }
}
