use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

pub const OTSU_BINS: usize = 256;
const MAX_VALUES: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtsuThreshold {
    /// Values strictly above this are foreground.
    pub threshold: f64,
    /// Bins `< cut` form class 0.
    pub cut: usize,
    pub lo: f64,
    pub hi: f64,
}

/// 256-bin histogram over `[lo, hi]`; the maximum lands in the last bin.
pub fn otsu_histogram(values: &[f64], lo: f64, hi: f64) -> [u64; OTSU_BINS] {
    let mut hist = [0u64; OTSU_BINS];
    let span = hi - lo;
    for &v in values {
        let b = ((v - lo) / span * OTSU_BINS as f64).floor();
        hist[(b.max(0.0) as usize).min(OTSU_BINS - 1)] += 1;
    }
    hist
}

/// Between-class variance `w0 * w1 * (mu0 - mu1)^2` of `cut`, in bin units.
pub fn between_class_variance(hist: &[u64; OTSU_BINS], cut: usize) -> f64 {
    let (mut n0, mut s0, mut n, mut s) = (0.0, 0.0, 0.0, 0.0);
    for (b, &c) in hist.iter().enumerate() {
        let c = c as f64;
        if b < cut {
            n0 += c;
            s0 += c * b as f64;
        }
        n += c;
        s += c * b as f64;
    }
    let (n1, s1) = (n - n0, s - s0);
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    let (w0, w1) = (n0 / n, n1 / n);
    let d = s0 / n0 - s1 / n1;
    w0 * w1 * d * d
}

fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let mask = u64::MAX as u128;
    let (a0, a1) = (a & mask, a >> 64);
    let (b0, b1) = (b & mask, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
    let lo = (p00 & mask) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// `num_a / den_a` vs `num_b / den_b` without rounding.
fn cmp_ratio(num_a: u128, den_a: u128, num_b: u128, den_b: u128) -> Ordering {
    mul_wide(num_a, den_b).cmp(&mul_wide(num_b, den_a))
}

/// Otsu's threshold by exhaustive scan of the 255 interior cuts.
///
/// Between-class variance is compared as an exact rational
/// `(s0*n1 - s1*n0)^2 / (n0*n1)` (the common `N^2` factor dropped), so the
/// selected cut is the true argmax; the lowest cut wins ties. Returns `None`
/// for a (near-)constant input or when every value falls in one bin.
pub fn otsu_threshold(values: &[f64]) -> Result<Option<OtsuThreshold>> {
    if values.len() < 2 {
        return Err(EvalError::InvalidInput(format!("otsu needs >= 2 values, got {}", values.len())));
    }
    if values.len() > MAX_VALUES {
        return Err(EvalError::InvalidInput(format!("otsu input of {} values is too large", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::InvalidInput("otsu input has non-finite values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        return Ok(None);
    }
    let hist = otsu_histogram(values, lo, hi);
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Ok(None);
    }
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist.iter().enumerate().map(|(b, &c)| b as u128 * c as u128).sum();

    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for cut in 1..OTSU_BINS {
        n0 += hist[cut - 1] as u128;
        s0 += (cut - 1) as u128 * hist[cut - 1] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = s - s0;
        let diff = (s0 * n1).abs_diff(s1 * n0);
        let (num, den) = (diff * diff, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => cmp_ratio(num, den, bn, bd) == Ordering::Greater,
        };
        if better {
            best = Some((cut, num, den));
        }
    }
    Ok(best.map(|(cut, _, _)| OtsuThreshold {
        threshold: lo + cut as f64 * (hi - lo) / OTSU_BINS as f64,
        cut,
        lo,
        hi,
    }))
}
