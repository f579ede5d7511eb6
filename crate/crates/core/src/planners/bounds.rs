use serde::{Deserialize, Serialize};

use super::PlanError;

/// Admissible setpoint changes `[m, M]` on a lattice of step `resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortBounds {
    #[serde(rename = "m")]
    pub lower: f64,
    #[serde(rename = "M")]
    pub upper: f64,
    pub resolution: f64,
}

impl Default for ComfortBounds {
    fn default() -> Self {
        Self {
            lower: -2.0,
            upper: 0.0,
            resolution: 0.25,
        }
    }
}

impl ComfortBounds {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper) {
            return Err(PlanError::Bounds(format!("need m <= M, got [{}, {}]", self.lower, self.upper)));
        }
        if !(self.resolution > 0.0) {
            return Err(PlanError::Bounds(format!("resolution {} must be positive", self.resolution)));
        }
        let steps = (self.upper - self.lower) / self.resolution;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(PlanError::Bounds(format!(
                "range [{}, {}] is not a whole number of {} steps",
                self.lower, self.upper, self.resolution
            )));
        }
        Ok(())
    }

    /// Number of lattice intervals between `m` and `M`.
    pub fn n_steps(&self) -> usize {
        ((self.upper - self.lower) / self.resolution).round() as usize
    }

    /// The lattice point with index `j`, counted from `m`.
    pub fn point(&self, j: usize) -> f64 {
        if j == self.n_steps() {
            self.upper
        } else {
            self.lower + j as f64 * self.resolution
        }
    }

    /// All lattice points in increasing order.
    pub fn lattice(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|j| self.point(j)).collect()
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Nearest lattice point, after projection onto the bounds.
    pub fn round(&self, x: f64) -> f64 {
        let j = ((self.project(x) - self.lower) / self.resolution).round();
        self.point((j.max(0.0) as usize).min(self.n_steps()))
    }

    pub fn is_on_lattice(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper && self.round(x) == x
    }
}
