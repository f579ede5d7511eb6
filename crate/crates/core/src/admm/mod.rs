//! Consensus ADMM for sharing problems
//! `min sum_i g_i(x_i) + l(sum_i x_i)` with box-constrained blocks.
//!
//! Block `i` occupies its own index range of the stacked vector, so the
//! aggregate map is a sum of disjoint embeddings and norms of stacked
//! differences split exactly into per-block norms.

mod coordinator;

pub use coordinator::{coordinator_solve, dual_update};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// N blocks of length H.
pub type Blocks = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("penalty must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite { iter: usize, what: &'static str },
    #[error("no Lipschitz bound is available for this coupling")]
    UnsupportedCoupling,
    #[error("local solver failed on block {block}: {reason}")]
    Local { block: usize, reason: String },
    #[error("local controllers failed: {0}")]
    Remote(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Smooth coupling term `l` on the aggregate of the duplicated blocks.
pub trait Coupling {
    fn value(&self, x_bar: &Blocks) -> f64;
    /// Gradient of `l` with respect to block `i` of `x_bar`.
    fn block_grad(&self, x_bar: &Blocks, block: usize) -> Vec<f64>;
    /// Exact coordinator step.
    fn solve(&self, x: &Blocks, lambda: &Blocks, rho: f64) -> Result<Blocks, AdmmError>;
    /// Lipschitz constant of the gradient over the stacked vector, if known.
    fn lipschitz(&self, n_blocks: usize) -> Option<f64>;
}

/// `l(x_bar) = |sum_i x_bar_i - p_tot|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoupling {
    pub p_tot: Vec<f64>,
}

fn aggregate(x: &Blocks, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; h];
    for b in x {
        for t in 0..h {
            s[t] += b[t];
        }
    }
    s
}

impl Coupling for QuadraticCoupling {
    fn value(&self, x_bar: &Blocks) -> f64 {
        let s = aggregate(x_bar, self.p_tot.len());
        s.iter().zip(&self.p_tot).map(|(a, p)| (a - p).powi(2)).sum()
    }

    fn block_grad(&self, x_bar: &Blocks, _block: usize) -> Vec<f64> {
        let s = aggregate(x_bar, self.p_tot.len());
        s.iter().zip(&self.p_tot).map(|(a, p)| 2.0 * (a - p)).collect()
    }

    fn solve(&self, x: &Blocks, lambda: &Blocks, rho: f64) -> Result<Blocks, AdmmError> {
        coordinator_solve(x, lambda, &self.p_tot, rho)
    }

    /// `2 lambda_max(A^T A)` with `A = [I ... I]`, which is `2N`.
    fn lipschitz(&self, n_blocks: usize) -> Option<f64> {
        Some(2.0 * n_blocks as f64)
    }
}

/// Solver of the per-block subproblem
/// `min_x g_i(x) + lambda_i . (x_bar_i - x) + rho/2 |x_bar_i - x|^2` over the box.
pub trait LocalSolver {
    fn solve(&mut self, block: usize, x_bar: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>, AdmmError>;
    /// `g_i(x)`.
    fn objective(&self, block: usize, x: &[f64]) -> f64;
    /// Strong convexity modulus of the subproblem, if known.
    fn strong_convexity(&self, _block: usize, _rho: f64) -> Option<f64> {
        None
    }

    /// Solves every block. Implementations backed by remote workers
    /// override this to dispatch all blocks before collecting any answer.
    fn solve_all(&mut self, x_bar: &Blocks, lambda: &Blocks, rho: f64) -> Result<Blocks, AdmmError> {
        (0..x_bar.len()).map(|i| self.solve(i, &x_bar[i], &lambda[i], rho)).collect()
    }
}

/// `g(x) = |x|^2` on a box, solved exactly by clipping the unconstrained
/// minimizer `(lambda + rho x_bar) / (2 + rho)` coordinate-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLocal {
    pub lower: f64,
    pub upper: f64,
}

impl LocalSolver for QuadraticLocal {
    fn solve(&mut self, _block: usize, x_bar: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>, AdmmError> {
        Ok(x_bar
            .iter()
            .zip(lambda)
            .map(|(xb, l)| ((l + rho * xb) / (2.0 + rho)).clamp(self.lower, self.upper))
            .collect())
    }

    fn objective(&self, _block: usize, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn strong_convexity(&self, _block: usize, rho: f64) -> Option<f64> {
        Some(2.0 + rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub lagrangian: f64,
    pub primal_residual: f64,
    pub block_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub x: Blocks,
    pub x_bar: Blocks,
    pub lambda: Blocks,
    pub iter: usize,
    pub history: Vec<IterRecord>,
}

impl AdmmState {
    pub fn new(x: Blocks, x_bar: Blocks, lambda: Blocks) -> Self {
        Self {
            x,
            x_bar,
            lambda,
            iter: 0,
            history: Vec::new(),
        }
    }

    /// `x = x_bar = x0` and zero duals.
    pub fn from_primal(x0: Blocks) -> Self {
        let lambda = x0.iter().map(|b| vec![0.0; b.len()]).collect();
        Self::new(x0.clone(), x0, lambda)
    }

    pub fn block_residuals(&self) -> Vec<f64> {
        block_residuals(&self.x_bar, &self.x)
    }

    /// `|x_bar - x|_2` over all blocks.
    pub fn primal_residual(&self) -> f64 {
        self.block_residuals().iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

pub fn block_residuals(x_bar: &Blocks, x: &Blocks) -> Vec<f64> {
    x_bar
        .iter()
        .zip(x)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// Static description of a sharing problem.
pub struct SharingSpec<C: Coupling> {
    pub n_blocks: usize,
    pub block_len: usize,
    pub coupling: C,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rho: f64,
}

impl<C: Coupling> SharingSpec<C> {
    pub fn validate(&self) -> Result<(), AdmmError> {
        if !(self.rho > 0.0) {
            return Err(AdmmError::NonPositiveRho(self.rho));
        }
        if self.lower.len() != self.n_blocks || self.upper.len() != self.n_blocks {
            return Err(AdmmError::Shape("one bound pair per block".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(m, mx)| m > mx) {
            return Err(AdmmError::Shape("lower bound above upper bound".into()));
        }
        Ok(())
    }

    fn check_state(&self, s: &AdmmState) -> Result<(), AdmmError> {
        for (what, b) in [("x", &s.x), ("x_bar", &s.x_bar), ("lambda", &s.lambda)] {
            if b.len() != self.n_blocks || b.iter().any(|v| v.len() != self.block_len) {
                return Err(AdmmError::Shape(format!(
                    "{what} must be {} blocks of length {}",
                    self.n_blocks, self.block_len
                )));
            }
        }
        Ok(())
    }
}

/// Augmented Lagrangian with the `rho/2` penalty:
/// `sum g(x_i) + l(x_bar) + sum lambda_i . (x_bar_i - x_i) + rho/2 |x_bar_i - x_i|^2`.
pub fn lagrangian_value<C: Coupling>(spec: &SharingSpec<C>, local: &dyn LocalSolver, state: &AdmmState) -> f64 {
    let mut v = spec.coupling.value(&state.x_bar);
    for i in 0..state.x.len() {
        v += local.objective(i, &state.x[i]);
        for t in 0..state.x[i].len() {
            let r = state.x_bar[i][t] - state.x[i][t];
            v += state.lambda[i][t] * r + 0.5 * spec.rho * r * r;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iter: usize,
    pub primal_tol: f64,
    /// Also require `rho |x_bar^{k+1} - x_bar^k| < dual_tol` before stopping.
    pub dual_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iter: 20,
            primal_tol: 1e-3,
            dual_tol: f64::INFINITY,
        }
    }
}

fn all_finite(b: &Blocks) -> bool {
    b.iter().flatten().all(|v| v.is_finite())
}

/// Runs local solves, coordinator step and dual update until the stop rule
/// fires. `observe` sees the state after every iteration.
pub fn run_admm<C: Coupling>(
    spec: &SharingSpec<C>,
    local: &mut dyn LocalSolver,
    init: AdmmState,
    stop: StopRule,
    mut observe: impl FnMut(&AdmmState),
) -> Result<AdmmState, AdmmError> {
    spec.validate()?;
    spec.check_state(&init)?;
    let mut state = init;
    while state.iter < stop.max_iter {
        let iter = state.iter + 1;
        let x = local.solve_all(&state.x_bar, &state.lambda, spec.rho)?;
        if x.len() != spec.n_blocks {
            return Err(AdmmError::Shape(format!("{} local answers for {} blocks", x.len(), spec.n_blocks)));
        }
        if let Some((i, xi)) = x.iter().enumerate().find(|(_, xi)| xi.len() != spec.block_len) {
            return Err(AdmmError::Local {
                block: i,
                reason: format!("returned {} values", xi.len()),
            });
        }
        if !all_finite(&x) {
            return Err(AdmmError::NonFinite { iter, what: "local iterate" });
        }
        let x_bar = spec.coupling.solve(&x, &state.lambda, spec.rho)?;
        if !all_finite(&x_bar) {
            return Err(AdmmError::NonFinite { iter, what: "coordinator iterate" });
        }
        let dual_change = spec.rho
            * block_residuals(&x_bar, &state.x_bar)
                .iter()
                .map(|r| r * r)
                .sum::<f64>()
                .sqrt();
        dual_update(&mut state.lambda, &x_bar, &x, spec.rho);
        if !all_finite(&state.lambda) {
            return Err(AdmmError::NonFinite { iter, what: "dual" });
        }
        state.x = x;
        state.x_bar = x_bar;
        state.iter = iter;
        let block = state.block_residuals();
        let primal = block.iter().map(|r| r * r).sum::<f64>().sqrt();
        state.history.push(IterRecord {
            lagrangian: lagrangian_value(spec, &*local, &state),
            primal_residual: primal,
            block_residuals: block,
        });
        observe(&state);
        if primal < stop.primal_tol && dual_change < stop.dual_tol {
            break;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Lipschitz constant of the coupling gradient.
    pub l: f64,
    /// Strong convexity of the coordinator subproblem.
    pub gamma_bar: f64,
    /// Strong convexity of each local subproblem, where known.
    pub gamma: Vec<Option<f64>>,
    pub rho_ge_l: bool,
    pub rho_gamma_bar_ge_2l2: bool,
    pub rho_ok: bool,
}

/// Checks `rho >= L` and `rho * gamma_bar >= 2 L^2`. The coordinator
/// objective is a convex quadratic plus `rho/2 |.|^2`, so `gamma_bar = rho`.
pub fn verify_assumptions<C: Coupling>(
    spec: &SharingSpec<C>,
    local: &dyn LocalSolver,
) -> Result<AssumptionReport, AdmmError> {
    spec.validate()?;
    let l = spec
        .coupling
        .lipschitz(spec.n_blocks)
        .ok_or(AdmmError::UnsupportedCoupling)?;
    let gamma_bar = spec.rho;
    let rho_ge_l = spec.rho >= l;
    let rho_gamma_bar_ge_2l2 = spec.rho * gamma_bar >= 2.0 * l * l;
    Ok(AssumptionReport {
        l,
        gamma_bar,
        gamma: (0..spec.n_blocks).map(|i| local.strong_convexity(i, spec.rho)).collect(),
        rho_ge_l,
        rho_gamma_bar_ge_2l2,
        rho_ok: rho_ge_l && rho_gamma_bar_ge_2l2,
    })
}

/// Writes `iter,lagrangian,primal_residual,block_residual_0..N-1`.
pub fn write_history_csv<W: Write>(history: &[IterRecord], out: W) -> Result<(), AdmmError> {
    let n = history.first().map_or(0, |r| r.block_residuals.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string(), "lagrangian".into(), "primal_residual".into()];
    header.extend((0..n).map(|i| format!("block_residual_{i}")));
    w.write_record(&header)?;
    for (k, r) in history.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), r.lagrangian.to_string(), r.primal_residual.to_string()];
        row.extend(r.block_residuals.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
