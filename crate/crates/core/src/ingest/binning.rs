use chrono::{DateTime, Duration, DurationRound, Utc};

use crate::scenario::BIN_MINUTES;

pub fn floor_to_bin(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(Duration::minutes(BIN_MINUTES as i64)).expect("bin width fits any timestamp")
}

/// Mean of the readings in each bin `[t0 + 15k, t0 + 15(k+1))`; `None` for
/// bins without readings. `readings` must be sorted by time.
pub fn bin_readings(readings: &[(DateTime<Utc>, f64)], t0: DateTime<Utc>, bins: usize) -> Vec<Option<f64>> {
    let width = Duration::minutes(BIN_MINUTES as i64);
    (0..bins)
        .map(|k| {
            let lo = t0 + width * k as i32;
            let hi = lo + width;
            let a = readings.partition_point(|(t, _)| *t < lo);
            let b = readings.partition_point(|(t, _)| *t < hi);
            let slice = &readings[a..b];
            (!slice.is_empty()).then(|| slice.iter().map(|(_, v)| v).sum::<f64>() / slice.len() as f64)
        })
        .collect()
}

/// Fills runs of at most `max_gap` missing bins: interior runs linearly,
/// runs at either end with the nearest value. Longer runs fail with a
/// description.
pub fn fill_gaps(series: &[Option<f64>], max_gap: usize) -> Result<Vec<f64>, String> {
    let known: Vec<usize> = (0..series.len()).filter(|&i| series[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err("no readings".into());
    };
    let value = |i: usize| series[i].expect("known index");
    let mut out = vec![0.0; series.len()];
    let too_long = |run: usize| format!("gap of {run} bins (max {max_gap})");
    if first > max_gap {
        return Err(too_long(first));
    }
    if series.len() - 1 - last > max_gap {
        return Err(too_long(series.len() - 1 - last));
    }
    out[..first].fill(value(first));
    out[last..].fill(value(last));
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a - 1 > max_gap {
            return Err(too_long(b - a - 1));
        }
        let (va, vb) = (value(a), value(b));
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a) {
            *slot = va + (vb - va) * (i - a) as f64 / (b - a) as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 6, h, m, 0).unwrap()
    }

    #[test]
    fn readings_share_a_bin() {
        let r = [(at(10, 7), 40.0), (at(10, 13), 50.0), (at(10, 15), 60.0)];
        let b = bin_readings(&r, at(10, 0), 3);
        assert_eq!(b, vec![Some(45.0), Some(60.0), None]);
    }

    #[test]
    fn rebinning_is_idempotent() {
        let r = [(at(9, 1), 30.0), (at(9, 14), 34.0), (at(9, 50), 20.0)];
        let once = bin_readings(&r, at(9, 0), 4);
        let as_readings: Vec<_> = once
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (at(9, 0) + Duration::minutes(15 * k as i64), v)))
            .collect();
        assert_eq!(bin_readings(&as_readings, at(9, 0), 4), once);
    }

    #[test]
    fn gap_policy() {
        assert_eq!(fill_gaps(&[Some(10.0), None, None, Some(40.0)], 2).unwrap(), vec![10.0, 20.0, 30.0, 40.0]);
        assert_eq!(fill_gaps(&[None, Some(5.0), None], 2).unwrap(), vec![5.0, 5.0, 5.0]);
        assert!(fill_gaps(&[Some(1.0), None, None, None, Some(2.0)], 2).unwrap_err().contains("3 bins"));
        assert!(fill_gaps(&[None, None], 2).is_err());
    }

    #[test]
    fn floors_to_quarter_hour() {
        assert_eq!(floor_to_bin(at(10, 14)), at(10, 0));
        assert_eq!(floor_to_bin(at(10, 15)), at(10, 15));
    }
}
