use serde::{Deserialize, Serialize};

use super::{ComfortBounds, HorizonModel, PlanError};

/// Demand-response window `[start, end)` in timestep indices with a
/// building power cap in watts for each of its steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrEvent {
    pub start: usize,
    pub end: usize,
    pub p_max: Vec<f64>,
}

impl DrEvent {
    pub fn constant(start: usize, end: usize, p_max: f64) -> Self {
        Self {
            start,
            end,
            p_max: vec![p_max; end.saturating_sub(start)],
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.start >= self.end || self.p_max.len() != self.end - self.start {
            return Err(PlanError::Shape(format!(
                "event [{}, {}) with {} caps",
                self.start,
                self.end,
                self.p_max.len()
            )));
        }
        if self.p_max.iter().any(|p| !(*p > 0.0)) {
            return Err(PlanError::Shape("event caps must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..self.end).contains(&t)
    }

    pub fn cap_at(&self, t: usize) -> Option<f64> {
        self.contains(t).then(|| self.p_max[t - self.start])
    }
}

/// The cap in force at `t`: the tightest active event, `+inf` outside events.
pub fn cap_at(events: &[DrEvent], t: usize) -> f64 {
    events
        .iter()
        .filter_map(|e| e.cap_at(t))
        .fold(f64::INFINITY, f64::min)
}

/// Caps over the `h` steps starting at `t0`.
pub fn horizon_caps(events: &[DrEvent], t0: usize, h: usize) -> Vec<f64> {
    (t0..t0 + h).map(|t| cap_at(events, t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConversionOutcome {
    NoAction,
    Saturate,
    /// Building power target in watts.
    RunAdmm { p_tot: Vec<f64> },
}

impl ConversionOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            ConversionOutcome::NoAction => "no_action",
            ConversionOutcome::Saturate => "saturate",
            ConversionOutcome::RunAdmm { .. } => "run_admm",
        }
    }
}

/// Conversion result plus the predicted baseline and lower-bound building
/// powers. Both are absent when no cap is finite and no prediction ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    pub outcome: ConversionOutcome,
    pub p_bu: Option<Vec<f64>>,
    pub p_lb: Option<Vec<f64>>,
}

fn building_power(models: &[&dyn HorizonModel], deltas: impl Fn(usize) -> Vec<f64>, h: usize) -> Result<Vec<f64>, PlanError> {
    let mut total = vec![0.0; h];
    for (i, m) in models.iter().enumerate() {
        let p = m.predict(&deltas(i))?;
        if p.len() != h {
            return Err(PlanError::Shape(format!("zone {i} predicted {} steps, expected {h}", p.len())));
        }
        for t in 0..h {
            total[t] += p[t];
        }
    }
    Ok(total)
}

/// Turns a power cap into a building target for the coordinator.
///
/// With `cap = (1 - nu) p_max`: no action if the baseline stays under the
/// cap everywhere, full saturation if even the lowest setpoints exceed it
/// anywhere, otherwise ADMM towards `min(P_bu, cap)`.
pub fn convert_constraint(
    models: &[&dyn HorizonModel],
    p_max: &[f64],
    nu: f64,
    bounds: &[ComfortBounds],
) -> Result<Conversion, PlanError> {
    if !(0.0..1.0).contains(&nu) {
        return Err(PlanError::InvalidSlack(nu));
    }
    if models.len() != bounds.len() {
        return Err(PlanError::Shape(format!("{} models but {} bounds", models.len(), bounds.len())));
    }
    let h = p_max.len();
    if let Some((i, _)) = models.iter().enumerate().find(|(_, m)| m.horizon() != h) {
        return Err(PlanError::Shape(format!("zone {i} horizon differs from the {h} caps")));
    }
    let cap: Vec<f64> = p_max.iter().map(|p| (1.0 - nu) * p).collect();
    if cap.iter().all(|c| c.is_infinite()) {
        return Ok(Conversion {
            outcome: ConversionOutcome::NoAction,
            p_bu: None,
            p_lb: None,
        });
    }
    let p_bu = building_power(models, |_| vec![0.0; h], h)?;
    if p_bu.iter().zip(&cap).all(|(p, c)| p <= c) {
        return Ok(Conversion {
            outcome: ConversionOutcome::NoAction,
            p_bu: Some(p_bu),
            p_lb: None,
        });
    }
    let p_lb = building_power(models, |i| vec![bounds[i].lower; h], h)?;
    let outcome = if p_lb.iter().zip(&cap).any(|(p, c)| p > c) {
        ConversionOutcome::Saturate
    } else {
        ConversionOutcome::RunAdmm {
            p_tot: p_bu.iter().zip(&cap).map(|(p, c)| p.min(*c)).collect(),
        }
    };
    Ok(Conversion {
        outcome,
        p_bu: Some(p_bu),
        p_lb: Some(p_lb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    /// Power `base + slope * delta` at every step.
    struct Affine {
        base: f64,
        slope: f64,
        h: usize,
        calls: Cell<usize>,
    }

    impl HorizonModel for Affine {
        fn horizon(&self) -> usize {
            self.h
        }
        fn predict(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError> {
            self.calls.set(self.calls.get() + 1);
            Ok(delta.iter().map(|d| self.base + self.slope * d).collect())
        }
        fn evaluations(&self) -> usize {
            self.calls.get()
        }
    }

    fn zones() -> Vec<Affine> {
        (0..3)
            .map(|i| Affine { base: 1000.0 + 100.0 * i as f64, slope: 400.0, h: 4, calls: Cell::new(0) })
            .collect()
    }

    fn run(p_max: &[f64], nu: f64) -> Conversion {
        let z = zones();
        let refs: Vec<&dyn HorizonModel> = z.iter().map(|z| z as &dyn HorizonModel).collect();
        convert_constraint(&refs, p_max, nu, &[ComfortBounds::default(); 3]).unwrap()
    }

    // baseline building power is 3300 W, lower bound 3300 - 3 * 800 = 900 W

    #[test]
    fn baseline_under_cap_needs_no_action() {
        let c = run(&[4000.0; 4], 0.1);
        assert_eq!(c.outcome, ConversionOutcome::NoAction);
        assert_eq!(c.p_bu.unwrap(), vec![3300.0; 4]);
        assert!(c.p_lb.is_none());
    }

    #[test]
    fn slack_can_force_action() {
        let c = run(&[3500.0; 4], 0.1);
        assert!(matches!(c.outcome, ConversionOutcome::RunAdmm { .. }));
    }

    #[test]
    fn infeasible_cap_saturates() {
        let c = run(&[3000.0, 800.0, 3000.0, 3000.0], 0.0);
        assert_eq!(c.outcome, ConversionOutcome::Saturate);
        assert_eq!(c.p_lb.unwrap(), vec![900.0; 4]);
    }

    #[test]
    fn target_is_min_of_baseline_and_cap() {
        let inf = f64::INFINITY;
        let c = run(&[inf, 2000.0, 3000.0, 4000.0], 0.0);
        assert_eq!(c.outcome, ConversionOutcome::RunAdmm { p_tot: vec![3300.0, 2000.0, 3000.0, 3300.0] });
        let c = run(&[inf, 2000.0, 3000.0, 4000.0], 0.5);
        assert_eq!(c.outcome, ConversionOutcome::RunAdmm { p_tot: vec![3300.0, 1000.0, 1500.0, 2000.0] });
    }

    #[test]
    fn no_finite_cap_skips_prediction() {
        let z = zones();
        let refs: Vec<&dyn HorizonModel> = z.iter().map(|z| z as &dyn HorizonModel).collect();
        let c = convert_constraint(&refs, &[f64::INFINITY; 4], 0.1, &[ComfortBounds::default(); 3]).unwrap();
        assert_eq!(c.outcome, ConversionOutcome::NoAction);
        assert!(z.iter().all(|z| z.evaluations() == 0));
    }

    #[test]
    fn rejects_mismatches() {
        let z = zones();
        let refs: Vec<&dyn HorizonModel> = z.iter().map(|z| z as &dyn HorizonModel).collect();
        assert!(convert_constraint(&refs, &[1.0; 4], 0.1, &[ComfortBounds::default(); 2]).is_err());
        assert!(convert_constraint(&refs, &[1.0; 3], 0.1, &[ComfortBounds::default(); 3]).is_err());
        assert!(matches!(
            convert_constraint(&refs, &[1.0; 4], 1.0, &[ComfortBounds::default(); 3]),
            Err(PlanError::InvalidSlack(_))
        ));
    }

    #[test]
    fn events_compose_into_horizon_caps() {
        let events = vec![DrEvent::constant(2, 5, 900.0), DrEvent::constant(4, 6, 800.0)];
        events.iter().for_each(|e| e.validate().unwrap());
        let caps = horizon_caps(&events, 0, 7);
        let inf = f64::INFINITY;
        assert_eq!(caps, vec![inf, inf, 900.0, 900.0, 800.0, 800.0, inf]);
        assert!(DrEvent::constant(3, 3, 1.0).validate().is_err());
        assert!(DrEvent::constant(3, 4, 0.0).validate().is_err());
    }
}
