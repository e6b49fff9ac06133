use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{otsu_threshold, EvalError, Result};
use crate::scenario::BIN_MINUTES;

/// Minimum temporal extent in bins ("over one hour").
pub const MIN_REGION_BINS: usize = 5;

/// A connected congested area of a space-time drop image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionRegion {
    /// `(link, bin)` cells, row-major order.
    pub cells: Vec<(usize, usize)>,
    /// Minutes from the closure start.
    pub start_time: f64,
    /// Minutes.
    pub duration: f64,
    /// Miles.
    pub max_queue_length: f64,
    pub cell_count: usize,
}

/// `max(0, historical - speed)` on masked cells, 0 on padding.
pub fn speed_drop_image(historical: &[f64], speed: &[f64], mask: &[f64]) -> Result<Vec<f64>> {
    if historical.len() != speed.len() || speed.len() != mask.len() {
        return Err(EvalError::Shape(format!(
            "historical {}, speed {}, mask {}",
            historical.len(),
            speed.len(),
            mask.len()
        )));
    }
    Ok((0..mask.len())
        .map(|i| if mask[i] == 1.0 { (historical[i] - speed[i]).max(0.0) } else { 0.0 })
        .collect())
}

/// Start, duration and max queue length of a set of cells.
///
/// The queue length of a time column is the summed length of the region's
/// links in that column; the maximum over columns is reported.
pub fn congestion_attributes(cells: &[(usize, usize)], link_lengths: &[f64]) -> (f64, f64, f64) {
    let Some(first) = cells.iter().map(|c| c.1).min() else {
        return (0.0, 0.0, 0.0);
    };
    let last = cells.iter().map(|c| c.1).max().unwrap_or(first);
    let mut per_column = vec![0.0; last - first + 1];
    for &(r, c) in cells {
        per_column[c - first] += link_lengths.get(r).copied().unwrap_or(0.0);
    }
    let bin = BIN_MINUTES as f64;
    (
        first as f64 * bin,
        (last - first + 1) as f64 * bin,
        per_column.into_iter().fold(0.0, f64::max),
    )
}

fn is_valid(cells: &[(usize, usize)], width: usize) -> bool {
    let first = cells.iter().map(|c| c.1).min().unwrap_or(0);
    let last = cells.iter().map(|c| c.1).max().unwrap_or(0);
    if last + 1 - first < MIN_REGION_BINS {
        return false;
    }
    let mut member = std::collections::HashSet::with_capacity(cells.len());
    member.extend(cells.iter().map(|&(r, c)| r * width + c));
    cells.iter().any(|&(r, c)| member.contains(&((r + 1) * width + c)))
}

/// Binarises the drop image at its Otsu threshold (masked cells only),
/// labels 4-connected components, and keeps those spanning at least five
/// bins with two vertically adjacent links in some column.
///
/// A cell is congested iff its drop exceeds both the Otsu threshold and
/// `min_drop`. Otsu always splits a unimodal noise histogram somewhere, so
/// `min_drop` keeps measurement noise from forming regions; 0 disables it.
pub fn extract_congestion_regions(
    drop: &[f64],
    mask: &[f64],
    height: usize,
    width: usize,
    link_lengths: &[f64],
    min_drop: f64,
) -> Result<Vec<CongestionRegion>> {
    if drop.len() != height * width || mask.len() != drop.len() {
        return Err(EvalError::Shape(format!(
            "drop {} / mask {} cells for a {height}x{width} canvas",
            drop.len(),
            mask.len()
        )));
    }
    let values: Vec<f64> = (0..drop.len()).filter(|&i| mask[i] == 1.0).map(|i| drop[i]).collect();
    if values.len() < 2 {
        return Ok(Vec::new());
    }
    let Some(otsu) = otsu_threshold(&values)? else {
        return Ok(Vec::new());
    };
    let cut = otsu.threshold.max(min_drop);
    let hot: Vec<bool> = (0..drop.len()).map(|i| mask[i] == 1.0 && drop[i] > cut).collect();
    let mut seen = vec![false; drop.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..drop.len() {
        if !hot[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / width, i % width);
            cells.push((r, c));
            let mut visit = |j: usize| {
                if hot[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - width);
            }
            if r + 1 < height {
                visit(i + width);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < width {
                visit(i + 1);
            }
        }
        if is_valid(&cells, width) {
            cells.sort_unstable();
            let (start_time, duration, max_queue_length) = congestion_attributes(&cells, link_lengths);
            regions.push(CongestionRegion { cell_count: cells.len(), cells, start_time, duration, max_queue_length });
        }
    }
    Ok(regions)
}

/// Largest region by cell count; ties go to the earliest start.
pub fn primary_region(regions: &[CongestionRegion]) -> Option<&CongestionRegion> {
    regions.iter().reduce(|best, r| {
        if r.cell_count > best.cell_count || (r.cell_count == best.cell_count && r.start_time < best.start_time) {
            r
        } else {
            best
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CongestionScores {
    /// Minutes; absent when no pair matched.
    pub rmse_start: Option<f64>,
    pub rmse_duration: Option<f64>,
    /// Miles.
    pub rmse_queue: Option<f64>,
    /// Samples whose truth has at least one region.
    pub congested_samples: usize,
    pub matched: usize,
    pub missed: usize,
    pub false_alarms: usize,
}

/// Compares primary regions of each (truth, prediction) pair where both
/// sides have one; one-sided cases count as misses or false alarms.
pub fn congestion_rmse<'a, I>(pairs: I) -> CongestionScores
where
    I: IntoIterator<Item = (&'a [CongestionRegion], &'a [CongestionRegion])>,
{
    let mut scores = CongestionScores::default();
    let (mut se_start, mut se_dur, mut se_queue) = (0.0, 0.0, 0.0);
    for (truth, pred) in pairs {
        if !truth.is_empty() {
            scores.congested_samples += 1;
        }
        match (primary_region(truth), primary_region(pred)) {
            (Some(t), Some(p)) => {
                scores.matched += 1;
                se_start += (t.start_time - p.start_time).powi(2);
                se_dur += (t.duration - p.duration).powi(2);
                se_queue += (t.max_queue_length - p.max_queue_length).powi(2);
            }
            (Some(_), None) => scores.missed += 1,
            (None, Some(_)) => scores.false_alarms += 1,
            (None, None) => {}
        }
    }
    if scores.matched > 0 {
        let n = scores.matched as f64;
        scores.rmse_start = Some((se_start / n).sqrt());
        scores.rmse_duration = Some((se_dur / n).sqrt());
        scores.rmse_queue = Some((se_queue / n).sqrt());
    }
    scores
}
