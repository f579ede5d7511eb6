use serde::{Deserialize, Serialize};

use crate::models::{LcCost, RolloutCost};

use super::{ComfortBounds, PlanError, PlanOutcome, SsmZone};

/// A zone model whose local objective can be differentiated with respect
/// to the setpoint changes.
pub trait ShootingModel {
    fn horizon(&self) -> usize;
    /// Predicted power in watts.
    fn powers(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError>;
    fn objective_grad(&self, delta: &[f64], cost: &LcCost) -> Result<RolloutCost, PlanError>;

    fn objective(&self, delta: &[f64], cost: &LcCost) -> Result<f64, PlanError> {
        let u: Vec<f64> = self.powers(delta)?.iter().map(|p| p / cost.power_scale).collect();
        Ok(cost.value(delta, &u))
    }
}

impl ShootingModel for SsmZone<'_> {
    fn horizon(&self) -> usize {
        self.base_setpoints.len()
    }

    fn powers(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError> {
        Ok(self.rollout(delta)?.powers)
    }

    fn objective_grad(&self, delta: &[f64], cost: &LcCost) -> Result<RolloutCost, PlanError> {
        self.cost_grad(delta, cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpnConfig {
    pub max_iters: usize,
    /// First step size tried by the backtracking search.
    pub initial_step: f64,
    /// Stop once the rounded plan survives this many iterations unchanged.
    pub stable_iters: usize,
    /// Sufficient-decrease constant of the backtracking search.
    pub armijo: f64,
    pub min_step: f64,
    /// After rounding, move single coordinates by one lattice step while
    /// that lowers the objective.
    pub lattice_polish: bool,
}

impl Default for DdpnConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            initial_step: 0.1,
            stable_iters: 3,
            armijo: 1e-4,
            min_step: 1e-10,
            lattice_polish: true,
        }
    }
}

/// Projected-gradient shooting on the local objective, starting from `init`.
/// Returns the lattice-rounded plan and its re-rolled prediction.
pub fn ddpn_solve(
    zone: &dyn ShootingModel,
    cost: &LcCost,
    bounds: &ComfortBounds,
    cfg: &DdpnConfig,
    init: &[f64],
) -> Result<PlanOutcome, PlanError> {
    ddpn_solve_traced(zone, cost, bounds, cfg, init).map(|(p, _)| p)
}

/// As [`ddpn_solve`], also returning the continuous objective after every
/// accepted step (the first entry is the objective at `init`).
pub fn ddpn_solve_traced(
    zone: &dyn ShootingModel,
    cost: &LcCost,
    bounds: &ComfortBounds,
    cfg: &DdpnConfig,
    init: &[f64],
) -> Result<(PlanOutcome, Vec<f64>), PlanError> {
    bounds.validate()?;
    if init.len() != zone.horizon() {
        return Err(PlanError::Shape(format!("{} initial changes for horizon {}", init.len(), zone.horizon())));
    }
    let mut delta: Vec<f64> = init.iter().map(|&d| bounds.project(d)).collect();
    let mut cur = zone.objective_grad(&delta, cost)?;
    let mut trace = vec![cur.value];
    let round = |d: &[f64]| -> Vec<f64> { d.iter().map(|&x| bounds.round(x)).collect() };
    let mut rounded = round(&delta);
    let mut unchanged = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iters && unchanged < cfg.stable_iters {
        let mut step = cfg.initial_step;
        let mut accepted = None;
        while step >= cfg.min_step {
            let cand: Vec<f64> = delta
                .iter()
                .zip(&cur.grad)
                .map(|(d, g)| bounds.project(d - step * g))
                .collect();
            if cand == delta {
                break;
            }
            let decrease: f64 = cur.grad.iter().zip(cand.iter().zip(&delta)).map(|(g, (c, d))| g * (c - d)).sum();
            let value = zone.objective(&cand, cost)?;
            if !value.is_finite() {
                return Err(PlanError::NonFinite("local objective"));
            }
            if value <= cur.value + cfg.armijo * decrease {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        delta = next;
        cur = zone.objective_grad(&delta, cost)?;
        trace.push(cur.value);
        iterations += 1;
        let r = round(&delta);
        if r == rounded {
            unchanged += 1;
        } else {
            rounded = r;
            unchanged = 0;
        }
    }
    let mut objective = zone.objective(&rounded, cost)?;
    if !objective.is_finite() {
        return Err(PlanError::NonFinite("local objective"));
    }
    if cfg.lattice_polish {
        objective = polish(zone, cost, bounds, &mut rounded, objective)?;
    }
    let powers = zone.powers(&rounded)?;
    Ok((
        PlanOutcome {
            delta: rounded,
            u_pred: powers,
            objective,
            iterations,
        },
        trace,
    ))
}

/// Coordinate descent on the lattice from `delta`, accepting strict decreases.
fn polish(
    zone: &dyn ShootingModel,
    cost: &LcCost,
    bounds: &ComfortBounds,
    delta: &mut [f64],
    mut value: f64,
) -> Result<f64, PlanError> {
    let mut improved = true;
    while improved {
        improved = false;
        for t in 0..delta.len() {
            for dir in [-1.0, 1.0] {
                let moved = bounds.round(delta[t] + dir * bounds.resolution);
                if moved == delta[t] {
                    continue;
                }
                let old = delta[t];
                delta[t] = moved;
                let v = zone.objective(delta, cost)?;
                if v < value {
                    value = v;
                    improved = true;
                    break;
                }
                delta[t] = old;
            }
        }
    }
    Ok(value)
}
