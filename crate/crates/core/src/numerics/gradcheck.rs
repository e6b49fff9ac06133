use std::fmt;

use serde::Serialize;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Largest fraction of coordinates that may be skipped as non-smooth before
/// the check fails outright.
const MAX_NONSMOOTH_FRACTION: f64 = 0.05;

/// Per-block outcome of a gradient check.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub coordinates: usize,
    /// Coordinates where the step-h and step-h/2 estimates disagree: a kink
    /// (relu at 0, pooling switch) lies within the stencil.
    pub nonsmooth: usize,
    pub worst_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    pub worst_rel_error: f64,
    pub worst_block: Option<String>,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck {} (tolerance {:e}, worst {:.3e} in {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance,
            self.worst_rel_error,
            self.worst_block.as_deref().unwrap_or("-")
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:<18} n={:<6} skipped={:<4} worst={:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
                e.name, e.coordinates, e.nonsmooth, e.worst_rel_error, e.worst_index, e.worst_analytic, e.worst_numeric
            )?;
        }
        Ok(())
    }
}

/// Compares analytic gradients against central finite differences, one
/// named block of coordinates at a time.
pub struct GradCheck {
    tolerance: f64,
    floor: f64,
    step: f64,
    entries: Vec<GradCheckEntry>,
}

impl GradCheck {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance, floor: 1e-6, step: FD_STEP, entries: Vec::new() }
    }

    /// Magnitude below which errors are measured absolutely rather than
    /// relatively.
    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Central-difference step; the non-smoothness probe uses half of it.
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn rel(&self, a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(self.floor)
    }

    /// Checks every coordinate of `point`. `loss(i, v)` must evaluate the
    /// scalar loss with coordinate `i` replaced by `v` and everything else
    /// left at `point`.
    pub fn check_block(
        &mut self,
        name: &str,
        point: &[f64],
        analytic: &[f64],
        loss: impl FnMut(usize, f64) -> f64,
    ) {
        self.check_indices(name, point, analytic, 0..point.len(), loss);
    }

    pub fn check_indices(
        &mut self,
        name: &str,
        point: &[f64],
        analytic: &[f64],
        indices: impl IntoIterator<Item = usize>,
        mut loss: impl FnMut(usize, f64) -> f64,
    ) {
        assert_eq!(point.len(), analytic.len(), "gradcheck {name}: length mismatch");
        let mut entry = GradCheckEntry {
            name: name.to_string(),
            coordinates: 0,
            nonsmooth: 0,
            worst_rel_error: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for i in indices {
            let x = point[i];
            let central = |h: f64, loss: &mut dyn FnMut(usize, f64) -> f64| {
                (loss(i, x + h) - loss(i, x - h)) / (2.0 * h)
            };
            let coarse = central(self.step, &mut loss);
            let fine = central(self.step / 2.0, &mut loss);
            entry.coordinates += 1;
            if self.rel(coarse, fine) > self.tolerance {
                entry.nonsmooth += 1;
                continue;
            }
            let err = self.rel(analytic[i], fine);
            if err > entry.worst_rel_error || !err.is_finite() {
                entry.worst_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                entry.worst_index = i;
                entry.worst_analytic = analytic[i];
                entry.worst_numeric = fine;
            }
        }
        self.entries.push(entry);
    }

    pub fn finish(self) -> GradCheckReport {
        let mut worst = 0.0;
        let mut worst_block = None;
        let mut passed = true;
        for e in &self.entries {
            if e.worst_rel_error >= worst {
                worst = e.worst_rel_error;
                worst_block = Some(e.name.clone());
            }
            let too_rough = e.coordinates > 0 && e.nonsmooth as f64 > MAX_NONSMOOTH_FRACTION * e.coordinates as f64;
            if e.worst_rel_error > self.tolerance || too_rough {
                passed = false;
            }
        }
        GradCheckReport { tolerance: self.tolerance, entries: self.entries, worst_rel_error: worst, worst_block, passed }
    }
}
