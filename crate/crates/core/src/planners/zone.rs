use std::cell::Cell;

use crate::data::Disturbance;
use crate::models::{sample_streams, LcCost, RolloutCost, Rssm, RssmState, Ssm, SsmRollout};

use super::{HorizonModel, PlanError};

fn check_horizon(base: usize, dists: usize) -> Result<(), PlanError> {
    if base == 0 || base != dists {
        return Err(PlanError::Shape(format!("{base} baseline setpoints but {dists} disturbances")));
    }
    Ok(())
}

fn check_delta(delta: &[f64], h: usize) -> Result<(), PlanError> {
    if delta.len() != h {
        return Err(PlanError::Shape(format!("{} setpoint changes for horizon {h}", delta.len())));
    }
    Ok(())
}

/// Deterministic zone model positioned at the current planning instant.
pub struct SsmZone<'a> {
    pub model: &'a Ssm,
    pub s0: Vec<f64>,
    pub base_setpoints: Vec<f64>,
    pub dists: Vec<Disturbance>,
    evals: Cell<usize>,
}

impl<'a> SsmZone<'a> {
    pub fn new(model: &'a Ssm, s0: Vec<f64>, base_setpoints: Vec<f64>, dists: Vec<Disturbance>) -> Result<Self, PlanError> {
        check_horizon(base_setpoints.len(), dists.len())?;
        Ok(Self {
            model,
            s0,
            base_setpoints,
            dists,
            evals: Cell::new(0),
        })
    }

    fn count(&self) {
        self.evals.set(self.evals.get() + self.base_setpoints.len());
    }

    fn setpoints(&self, delta: &[f64]) -> Vec<f64> {
        self.base_setpoints.iter().zip(delta).map(|(b, d)| b + d).collect()
    }

    pub fn rollout(&self, delta: &[f64]) -> Result<SsmRollout, PlanError> {
        check_delta(delta, self.base_setpoints.len())?;
        self.count();
        Ok(self.model.rollout(&self.s0, &self.setpoints(delta), &self.dists)?)
    }

    pub fn cost_grad(&self, delta: &[f64], cost: &LcCost) -> Result<RolloutCost, PlanError> {
        check_delta(delta, self.base_setpoints.len())?;
        self.count();
        Ok(self
            .model
            .rollout_grad(&self.s0, &self.base_setpoints, delta, &self.dists, cost)?)
    }
}

impl HorizonModel for SsmZone<'_> {
    fn horizon(&self) -> usize {
        self.base_setpoints.len()
    }

    fn predict(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError> {
        Ok(self.rollout(delta)?.powers)
    }

    fn evaluations(&self) -> usize {
        self.evals.get()
    }
}

/// The highest-energy trajectory among a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// W, clipped at zero.
    pub powers: Vec<f64>,
    pub temps: Vec<f64>,
    pub sample: usize,
}

/// Stochastic zone model positioned at the current planning instant.
/// Every prediction reuses random streams `0..k` of `seed`.
pub struct RssmZone<'a> {
    pub model: &'a Rssm,
    pub state: RssmState,
    pub base_setpoints: Vec<f64>,
    pub dists: Vec<Disturbance>,
    pub k: usize,
    pub seed: u64,
    evals: Cell<usize>,
}

impl<'a> RssmZone<'a> {
    pub fn new(
        model: &'a Rssm,
        state: RssmState,
        base_setpoints: Vec<f64>,
        dists: Vec<Disturbance>,
        k: usize,
        seed: u64,
    ) -> Result<Self, PlanError> {
        check_horizon(base_setpoints.len(), dists.len())?;
        if k == 0 {
            return Err(PlanError::Shape("need at least one sample".into()));
        }
        Ok(Self {
            model,
            state,
            base_setpoints,
            dists,
            k,
            seed,
            evals: Cell::new(0),
        })
    }

    pub(crate) fn add_evaluations(&self, n: usize) {
        self.evals.set(self.evals.get() + n);
    }

    /// Runs all `k` samples and keeps the one with the largest total power.
    /// The first such sample wins ties.
    pub fn worst_case(&self, delta: &[f64]) -> Result<WorstCase, PlanError> {
        let h = self.base_setpoints.len();
        check_delta(delta, h)?;
        let a: Vec<f64> = (0..h)
            .map(|t| self.model.stats.action(self.base_setpoints[t] + delta[t]))
            .collect();
        let d: Vec<_> = self.dists.iter().map(|d| self.model.stats.disturbance(d)).collect();
        let mut rngs = sample_streams(self.seed, self.k);
        let trajs = self.model.rollout_samples_normalized(&self.state, &a, &d, &mut rngs);
        self.add_evaluations(self.k * h);
        let mut best: Option<(f64, usize)> = None;
        for (j, tr) in trajs.iter().enumerate() {
            let total: f64 = tr.iter().map(|y| self.model.power_watts(y)).sum();
            if !total.is_finite() {
                return Err(PlanError::NonFinite("sampled power"));
            }
            if best.is_none_or(|(b, _)| total > b) {
                best = Some((total, j));
            }
        }
        let (_, j) = best.expect("k >= 1");
        Ok(WorstCase {
            powers: trajs[j].iter().map(|y| self.model.power_watts(y)).collect(),
            temps: trajs[j].iter().map(|y| self.model.temp_celsius(y)).collect(),
            sample: j,
        })
    }
}

impl HorizonModel for RssmZone<'_> {
    fn horizon(&self) -> usize {
        self.base_setpoints.len()
    }

    fn predict(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError> {
        Ok(self.worst_case(delta)?.powers)
    }

    fn evaluations(&self) -> usize {
        self.evals.get()
    }
}
