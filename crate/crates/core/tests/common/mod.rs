//! Helpers shared by integration tests and the acceptance target.
#![allow(dead_code)]

pub mod plant;

use dpn_core::admm::{
    run_admm, AdmmError, AdmmState, Blocks, Coupling, LocalSolver, QuadraticCoupling, QuadraticLocal,
    SharingSpec, StopRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LOWER: f64 = -2.0;
pub const UPPER: f64 = 0.0;

pub struct ConvexInstance {
    pub spec: SharingSpec<QuadraticCoupling>,
    pub x0: Blocks,
}

/// `g = |x|^2` on `[-2, 0]`, `l = |sum x - P|^2` with a random negative target.
pub fn convex_instance(n: usize, h: usize, rho: f64, seed: u64) -> ConvexInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_tot = (0..h).map(|_| rng.random_range(-8.0..1.0)).collect();
    let x0 = (0..n)
        .map(|_| (0..h).map(|_| rng.random_range(LOWER..=UPPER)).collect())
        .collect();
    ConvexInstance {
        spec: SharingSpec {
            n_blocks: n,
            block_len: h,
            coupling: QuadraticCoupling { p_tot },
            lower: vec![LOWER; n],
            upper: vec![UPPER; n],
            rho,
        },
        x0,
    }
}

/// `x = x_bar = x0`, duals at `-grad l(x0)` so the dual identity holds from the start.
pub fn initial_state(inst: &ConvexInstance) -> AdmmState {
    let mut s = AdmmState::from_primal(inst.x0.clone());
    for i in 0..inst.x0.len() {
        s.lambda[i] = inst.spec.coupling.block_grad(&inst.x0, i).iter().map(|g| -g).collect();
    }
    s
}

/// Centralized projected gradient on the stacked problem, run until the
/// step changes nothing above 1e-13.
pub fn qp_oracle(inst: &ConvexInstance) -> Blocks {
    let n = inst.spec.n_blocks;
    let h = inst.spec.block_len;
    let p = &inst.spec.coupling.p_tot;
    // Hessian per timestep is 2I + 2 11^T with top eigenvalue 2 + 2N
    let step = 1.0 / (2.0 + 2.0 * n as f64);
    let mut x = inst.x0.clone();
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        for t in 0..h {
            let s: f64 = x.iter().map(|b| b[t]).sum();
            let r = 2.0 * (s - p[t]);
            for b in x.iter_mut() {
                let new = (b[t] - step * (2.0 * b[t] + r)).clamp(LOWER, UPPER);
                change = change.max((new - b[t]).abs());
                b[t] = new;
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    x
}

pub fn max_abs_diff(a: &Blocks, b: &Blocks) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Worst observed margins of the descent and dual properties along a run.
#[derive(Debug, Default, Clone)]
pub struct LemmaReport {
    pub iterations: usize,
    /// Largest increase of the Lagrangian between consecutive iterates.
    pub max_lagrangian_increase: f64,
    /// Largest `|grad_i l(x_bar) + lambda_i|_inf`.
    pub max_identity_residual: f64,
    /// Largest `|d lambda_i| - L |d x_bar|` over blocks and iterations.
    pub max_block_dual_excess: f64,
    /// Largest `sum |d lambda_i|^2 - L^2 sum |d x_bar_i|^2`.
    pub max_summed_dual_excess: f64,
    /// Largest shortfall of the Lagrangian below its lower bound.
    pub max_lower_bound_violation: f64,
    pub final_primal_residual: f64,
    pub x_bar: Blocks,
}

/// Runs ADMM with exact local solves and checks every iteration. Stops once
/// both the primal and the dual residual fall below `tol`.
pub fn lemma_run(inst: &ConvexInstance, max_iter: usize, tol: f64) -> Result<LemmaReport, AdmmError> {
    let spec = &inst.spec;
    let l = spec.coupling.lipschitz(spec.n_blocks).unwrap();
    let rho = spec.rho;
    let local = QuadraticLocal { lower: LOWER, upper: UPPER };
    let init = initial_state(inst);
    let mut prev_lagr = dpn_core::admm::lagrangian_value(spec, &local, &init);
    let mut prev = init.clone();
    let mut rep = LemmaReport {
        max_lagrangian_increase: f64::NEG_INFINITY,
        max_block_dual_excess: f64::NEG_INFINITY,
        max_summed_dual_excess: f64::NEG_INFINITY,
        max_lower_bound_violation: f64::NEG_INFINITY,
        ..Default::default()
    };
    let stop = StopRule { max_iter, primal_tol: tol, dual_tol: tol };
    let out = run_admm(spec, &mut local.clone(), init, stop, |s| {
        let lagr = s.history.last().unwrap().lagrangian;
        rep.max_lagrangian_increase = rep.max_lagrangian_increase.max(lagr - prev_lagr);
        prev_lagr = lagr;

        for i in 0..spec.n_blocks {
            let g = spec.coupling.block_grad(&s.x_bar, i);
            for t in 0..spec.block_len {
                rep.max_identity_residual = rep.max_identity_residual.max((g[t] + s.lambda[i][t]).abs());
            }
        }

        let dxbar_all = norm(s.x_bar.iter().flatten().zip(prev.x_bar.iter().flatten()).map(|(a, b)| a - b));
        let mut sum_dl = 0.0;
        for i in 0..spec.n_blocks {
            let dl = norm(s.lambda[i].iter().zip(&prev.lambda[i]).map(|(a, b)| a - b));
            sum_dl += dl * dl;
            rep.max_block_dual_excess = rep.max_block_dual_excess.max(dl - l * dxbar_all);
        }
        rep.max_summed_dual_excess = rep.max_summed_dual_excess.max(sum_dl - l * l * dxbar_all * dxbar_all);

        let mut f = spec.coupling.value(&s.x);
        let mut pen = 0.0;
        for i in 0..spec.n_blocks {
            f += local.objective(i, &s.x[i]);
            let r = norm(s.x_bar[i].iter().zip(&s.x[i]).map(|(a, b)| a - b));
            pen += (rho - l) / 2.0 * r * r;
        }
        rep.max_lower_bound_violation = rep.max_lower_bound_violation.max(f + pen - lagr);
        prev = s.clone();
    })?;
    rep.iterations = out.iter;
    rep.final_primal_residual = out.primal_residual();
    rep.x_bar = out.x_bar;
    Ok(rep)
}

/// Coordinator update by a dense LU solve of the stacked stationarity system
/// `(rho I + 2 (1 1^T ⊗ I)) x = 2 P - lambda + rho u`.
pub fn dense_coordinator(u: &Blocks, lambda: &Blocks, p: &[f64], rho: f64) -> Blocks {
    use nalgebra::{DMatrix, DVector};
    let (n, h) = (u.len(), p.len());
    let idx = |i: usize, t: usize| i * h + t;
    let mut a = DMatrix::<f64>::zeros(n * h, n * h);
    let mut b = DVector::<f64>::zeros(n * h);
    for i in 0..n {
        for t in 0..h {
            a[(idx(i, t), idx(i, t))] += rho;
            for j in 0..n {
                a[(idx(i, t), idx(j, t))] += 2.0;
            }
            b[idx(i, t)] = 2.0 * p[t] - lambda[i][t] + rho * u[i][t];
        }
    }
    let x = a.lu().solve(&b).expect("system is positive definite");
    (0..n).map(|i| (0..h).map(|t| x[idx(i, t)]).collect()).collect()
}
