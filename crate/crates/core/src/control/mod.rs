//! The receding-horizon demand-response loop: a building coordinator that
//! converts power caps into targets and runs ADMM with one local controller
//! per zone, exchanging messages over an in-process or socket transport.

mod message;
mod retrain;
mod runlog;
mod scenario;
mod transport;
mod worker;

pub use message::{Handshake, Message, ZoneContext, PROTOCOL};
pub use retrain::{retrain_hook, RetrainConfig};
pub use runlog::{EpisodeRecord, EpisodeTiming, RunLog, StepRecord};
pub use scenario::{baseline_run, calibrate_p_max, daily_events, shipped_scenario, Calibration, ScenarioConfig};
pub use transport::{InProcess, Transport, TransportKind};
#[cfg(feature = "socket")]
pub use transport::{serve, SocketTransport};
pub use worker::{LcHost, LcWorker, PlannerKind, SelectionObserver};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{run_admm, AdmmError, AdmmState, Blocks, LocalSolver, QuadraticCoupling, SharingSpec, StopRule};
use crate::data::{Action, DataError, Dataset, Disturbance, Observation, ZoneSeries};
use crate::models::{ModelError, SurrogateModel, ZoneHistory};
use crate::planners::{horizon_caps, ConversionOutcome, DdpnConfig, DrEvent, PlanError, PlannerConfig};
use crate::sim::{SimError, Simulator, WeatherRecord};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("aborted: {0}")]
    Aborted(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub planner: PlannerConfig,
    pub kind: PlannerKind,
    /// Timesteps between planning instants; the first planned change is
    /// held for all of them.
    pub replan_every: usize,
    pub max_admm_iter: usize,
    /// Primal residual tolerance in scaled power units.
    pub primal_tol: f64,
    pub transport: TransportKind,
    pub seed: u64,
    pub timeout_s: f64,
    pub ddpn: DdpnConfig,
    pub retrain: RetrainConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            kind: PlannerKind::Ddpn,
            replan_every: 2,
            max_admm_iter: 20,
            primal_tol: 1e-3,
            transport: TransportKind::Inproc,
            seed: 0,
            timeout_s: 30.0,
            ddpn: DdpnConfig::default(),
            retrain: RetrainConfig::default(),
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.planner.validate()?;
        if self.replan_every == 0 || self.replan_every > self.planner.horizon {
            return Err(ControlError::Config(format!(
                "replan_every {} must lie in 1..={}",
                self.replan_every, self.planner.horizon
            )));
        }
        if self.max_admm_iter == 0 {
            return Err(ControlError::Config("max_admm_iter must be positive".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(ControlError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a control run needs besides the models.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Building at the first controlled step; cloned by each run.
    pub sim: Simulator,
    /// Recorded steps leading up to the run, at least one model history long
    /// for planning to start at step 0.
    pub history: Dataset,
    /// One record per step, covering `n_steps` plus the final horizon.
    pub weather: Vec<WeatherRecord>,
    /// Occupant setpoints per step and zone, same coverage as `weather`.
    pub baseline: Vec<Vec<f64>>,
    pub events: Vec<DrEvent>,
    pub n_steps: usize,
}

impl Scenario {
    fn validate(&self, horizon: usize) -> Result<(), ControlError> {
        let need = self.n_steps + horizon - 1;
        if self.weather.len() < need || self.baseline.len() < need {
            return Err(ControlError::Config(format!(
                "{} steps with horizon {horizon} need {need} weather and baseline rows, have {} and {}",
                self.n_steps,
                self.weather.len(),
                self.baseline.len()
            )));
        }
        let n = self.sim.n_zones();
        if self.baseline.iter().any(|b| b.len() != n) {
            return Err(ControlError::Config(format!("baseline rows must have {n} setpoints")));
        }
        for e in &self.events {
            e.validate()?;
        }
        Ok(())
    }
}

/// Seed of zone `zone`'s sampling streams for the episode at step `t`.
pub fn episode_seed(run_seed: u64, zone: usize, t: usize) -> u64 {
    let mut x = run_seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [zone as u64, t as u64] {
        x = (x ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

/// Coordinator-side local solver that forwards targets to the zones.
struct RemoteSolver<'a> {
    tx: &'a mut dyn Transport,
    n: usize,
    iter: usize,
    deltas: Vec<Vec<f64>>,
    u_pred: Blocks,
    lc_s: Vec<f64>,
    setup_s: f64,
    coordinator_s: Vec<f64>,
    last_reply: Option<Instant>,
    model_evals: usize,
}

impl RemoteSolver<'_> {
    fn collect(&mut self) -> Result<(), AdmmError> {
        let mut got = vec![false; self.n];
        for _ in 0..self.n {
            let msg = self.tx.recv().map_err(|e| {
                let missing: Vec<usize> = (0..self.n).filter(|&i| !got[i]).collect();
                AdmmError::Remote(format!("no reply from zones {missing:?}: {e}"))
            })?;
            match msg {
                Message::PowerReply { zone, iter, u_pred, delta, compute_s, setup_s, model_evals } => {
                    if iter != self.iter || zone >= self.n || got[zone] {
                        return Err(AdmmError::Remote(format!("unexpected reply from zone {zone} for iteration {iter}")));
                    }
                    got[zone] = true;
                    self.u_pred[zone] = u_pred;
                    self.deltas[zone] = delta;
                    self.lc_s.push(compute_s);
                    self.setup_s += setup_s;
                    self.model_evals += model_evals;
                }
                Message::Abort { reason } => return Err(AdmmError::Remote(reason)),
                other => return Err(AdmmError::Remote(format!("unexpected message {other:?}"))),
            }
        }
        Ok(())
    }
}

impl LocalSolver for RemoteSolver<'_> {
    fn solve(&mut self, block: usize, x_bar: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>, AdmmError> {
        let mut xb = vec![Vec::new(); self.n];
        let mut l = vec![Vec::new(); self.n];
        xb[block] = x_bar.to_vec();
        l[block] = lambda.to_vec();
        Ok(self.solve_all(&xb, &l, rho)?.swap_remove(block))
    }

    fn objective(&self, block: usize, _x: &[f64]) -> f64 {
        self.deltas[block].iter().map(|d| d * d).sum()
    }

    fn solve_all(&mut self, x_bar: &Blocks, lambda: &Blocks, _rho: f64) -> Result<Blocks, AdmmError> {
        if let Some(t) = self.last_reply {
            self.coordinator_s.push(t.elapsed().as_secs_f64());
        }
        self.iter += 1;
        for zone in 0..self.n {
            self.tx
                .send(Message::PowerTarget {
                    zone,
                    iter: self.iter,
                    u_bar: x_bar[zone].clone(),
                    lambda: lambda[zone].clone(),
                })
                .map_err(|e| AdmmError::Remote(e.to_string()))?;
        }
        self.collect()?;
        self.last_reply = Some(Instant::now());
        Ok(self.u_pred.clone())
    }
}

struct Decision {
    deltas: Vec<f64>,
    /// Predicted building power for the steps this decision covers.
    predicted: Vec<Option<f64>>,
    episode: Option<usize>,
    outcome: Option<String>,
    iters: usize,
}

struct Coordinator<'a> {
    cfg: &'a ControlConfig,
    scenario: &'a Scenario,
    tx: Box<dyn Transport>,
    n: usize,
    n_lags: usize,
    power_scale: f64,
    episodes: Vec<EpisodeRecord>,
    timing: Vec<EpisodeTiming>,
}

fn sum_zones(per_zone: &[Vec<f64>], h: usize) -> Vec<f64> {
    (0..h).map(|t| per_zone.iter().map(|p| p[t]).sum()).collect()
}

impl Coordinator<'_> {
    fn plan(&mut self, t: usize, data: &Dataset) -> Result<Decision, ControlError> {
        let h = self.cfg.planner.horizon;
        let r = self.cfg.replan_every;
        let nu = self.cfg.planner.nu;
        let caps = horizon_caps(&self.scenario.events, t, h);
        let idle = |outcome: Option<String>| Decision {
            deltas: vec![0.0; self.n],
            predicted: vec![None; r],
            episode: None,
            outcome,
            iters: 0,
        };
        if caps.iter().all(|c| c.is_infinite()) {
            return Ok(idle(None));
        }
        if data.len() < self.n_lags {
            // not enough history to condition the models on
            return Ok(idle(Some("warmup".into())));
        }
        let t0 = Instant::now();
        let episode = self.episodes.len();
        let dists: Vec<Disturbance> = self.scenario.weather[t..t + h].iter().map(Disturbance::from_weather).collect();
        for zone in 0..self.n {
            let context = ZoneContext {
                history: ZoneHistory::from_dataset(data, zone, data.len() - self.n_lags, data.len()),
                base_setpoints: self.scenario.baseline[t..t + h].iter().map(|b| b[zone]).collect(),
                disturbances: dists.clone(),
                seed: episode_seed(self.cfg.seed, zone, t),
            };
            self.tx.send(Message::Observe { zone, episode, context })?;
        }
        let mut p_bu = vec![Vec::new(); self.n];
        let mut p_lb = vec![Vec::new(); self.n];
        let mut p_init = vec![Vec::new(); self.n];
        for _ in 0..self.n {
            match self.tx.recv()? {
                Message::Forecast { zone, episode: e, p_bu: bu, p_lb: lb, p_init: init } if e == episode && zone < self.n => {
                    p_bu[zone] = bu;
                    p_lb[zone] = lb;
                    p_init[zone] = init;
                }
                Message::Abort { reason } => return Err(ControlError::Aborted(reason)),
                other => return Err(ControlError::Protocol(format!("expected a forecast, got {other:?}"))),
            }
        }
        if p_bu.iter().any(|p| p.len() != h) {
            return Err(ControlError::Protocol("missing zone forecasts".into()));
        }
        let bu = sum_zones(&p_bu, h);
        let lb = sum_zones(&p_lb, h);
        let cap: Vec<f64> = caps.iter().map(|c| (1.0 - nu) * c).collect();
        let (outcome, p_lb_diag) = if bu.iter().zip(&cap).all(|(p, c)| p <= c) {
            (ConversionOutcome::NoAction, None)
        } else if lb.iter().zip(&cap).any(|(p, c)| p > c) {
            (ConversionOutcome::Saturate, Some(lb.clone()))
        } else {
            let p_tot = bu.iter().zip(&cap).map(|(p, c)| p.min(*c)).collect();
            (ConversionOutcome::RunAdmm { p_tot }, Some(lb.clone()))
        };

        let mut timing = EpisodeTiming {
            episode,
            ..Default::default()
        };
        let mut rec = EpisodeRecord {
            episode,
            t,
            outcome: outcome.clone(),
            caps: caps.iter().map(|c| c.is_finite().then_some(*c)).collect(),
            p_bu: Some(bu.clone()),
            p_lb: p_lb_diag,
            iterations: 0,
            converged: true,
            residuals: Vec::new(),
            plans: Vec::new(),
            predicted: Vec::new(),
            planning_model_evals: 0,
        };
        let lower = self.cfg.planner.bounds.lower;
        let (plans, predicted) = match &outcome {
            ConversionOutcome::NoAction => (vec![vec![0.0; h]; self.n], bu),
            ConversionOutcome::Saturate => (vec![vec![lower; h]; self.n], lb),
            ConversionOutcome::RunAdmm { p_tot } => {
                let scale = self.power_scale;
                let spec = SharingSpec {
                    n_blocks: self.n,
                    block_len: h,
                    coupling: QuadraticCoupling {
                        p_tot: p_tot.iter().map(|p| p / scale).collect(),
                    },
                    lower: vec![lower; self.n],
                    upper: vec![self.cfg.planner.bounds.upper; self.n],
                    rho: self.cfg.planner.rho,
                };
                let x0: Blocks = p_init.iter().map(|p| p.iter().map(|v| v / scale).collect()).collect();
                let init = AdmmState::from_primal(x0.clone());
                let mut solver = RemoteSolver {
                    tx: self.tx.as_mut(),
                    n: self.n,
                    iter: 0,
                    deltas: vec![vec![0.0; h]; self.n],
                    u_pred: x0,
                    lc_s: Vec::new(),
                    setup_s: 0.0,
                    coordinator_s: Vec::new(),
                    last_reply: None,
                    model_evals: 0,
                };
                let stop = StopRule {
                    max_iter: self.cfg.max_admm_iter,
                    primal_tol: self.cfg.primal_tol,
                    dual_tol: f64::INFINITY,
                };
                let state = run_admm(&spec, &mut solver, init, stop, |_| {})?;
                if let Some(t) = solver.last_reply {
                    solver.coordinator_s.push(t.elapsed().as_secs_f64());
                }
                rec.iterations = state.iter;
                rec.converged = state.history.last().is_some_and(|r| r.primal_residual < self.cfg.primal_tol);
                rec.residuals = state.history;
                rec.planning_model_evals = solver.model_evals;
                timing.coordinator_iter_s = std::mem::take(&mut solver.coordinator_s);
                timing.lc_iter_s = std::mem::take(&mut solver.lc_s);
                timing.setup_s = solver.setup_s;
                let u: Vec<Vec<f64>> = solver.u_pred.iter().map(|z| z.iter().map(|v| v * scale).collect()).collect();
                (solver.deltas, sum_zones(&u, h))
            }
        };
        self.tx.send(Message::Converged { iter: rec.iterations })?;
        timing.dpn_call_s = t0.elapsed().as_secs_f64();

        let bounds = &self.cfg.planner.bounds;
        for (zone, p) in plans.iter().enumerate() {
            if p.len() != h || p.iter().any(|d| !bounds.is_on_lattice(*d)) {
                return Err(ControlError::InvalidPlan(format!("zone {zone} planned {p:?}")));
            }
        }
        let decision = Decision {
            deltas: plans.iter().map(|p| p[0]).collect(),
            predicted: predicted[..r].iter().map(|p| Some(*p)).collect(),
            episode: Some(episode),
            outcome: Some(outcome.tag().to_string()),
            iters: rec.iterations,
        };
        rec.plans = plans;
        rec.predicted = predicted;
        self.episodes.push(rec);
        self.timing.push(timing);
        Ok(decision)
    }
}

fn make_transport(
    models: &[SurrogateModel],
    cfg: &ControlConfig,
    observer: Option<SelectionObserver>,
) -> Result<Box<dyn Transport>, ControlError> {
    let mut host = LcHost::new(models, &cfg.planner, cfg.kind, cfg.ddpn)?;
    host.set_selection_observer(observer);
    match cfg.transport {
        TransportKind::Inproc => Ok(Box::new(InProcess::new(host))),
        #[cfg(feature = "socket")]
        TransportKind::Socket => Ok(Box::new(SocketTransport::spawn(host, Duration::from_secs_f64(cfg.timeout_s))?)),
        #[cfg(not(feature = "socket"))]
        TransportKind::Socket => {
            let _ = Duration::ZERO;
            Err(ControlError::Config("built without socket support".into()))
        }
    }
}

/// Runs the closed loop over `scenario` with one model per zone.
pub fn control_loop(scenario: &Scenario, models: &[SurrogateModel], cfg: &ControlConfig) -> Result<RunLog, ControlError> {
    control_loop_observed(scenario, models, cfg, None)
}

/// As [`control_loop`], reporting every stochastic selection to `observer`.
pub fn control_loop_observed(
    scenario: &Scenario,
    models: &[SurrogateModel],
    cfg: &ControlConfig,
    observer: Option<SelectionObserver>,
) -> Result<RunLog, ControlError> {
    cfg.validate()?;
    let h = cfg.planner.horizon;
    scenario.validate(h)?;
    let n = scenario.sim.n_zones();
    if models.len() != n {
        return Err(ControlError::Config(format!("{} models for {n} zones", models.len())));
    }
    let power_scale = models[0].stats().power_scale();
    if models.iter().any(|m| m.stats().power_scale() != power_scale) {
        return Err(ControlError::Config("zone models must share their power scale".into()));
    }
    let n_lags = models.iter().map(|m| m.n_lags()).max().unwrap_or(0);
    let mut models = models.to_vec();
    let mut observer = observer;
    let mut coord = Coordinator {
        cfg,
        scenario,
        tx: make_transport(&models, cfg, observer.take())?,
        n,
        n_lags,
        power_scale,
        episodes: Vec::new(),
        timing: Vec::new(),
    };
    let mut sim = scenario.sim.clone();
    if scenario.history.n_zones() != n {
        return Err(ControlError::Config("history and simulator disagree on zones".into()));
    }
    let mut data = scenario.history.clone();
    data.stats = *models[0].stats();
    let mut records = Vec::with_capacity(scenario.n_steps);
    let mut decision: Option<Decision> = None;
    let mut last_retrain = data.len();

    for t in 0..scenario.n_steps {
        if let Some(every) = cfg.retrain.cadence {
            if t > 0 && t % every == 0 {
                let from = last_retrain.saturating_sub(n_lags);
                let fresh = data.select_rows(&(from..data.len()).collect::<Vec<_>>());
                if retrain_hook(&mut models, &fresh, &cfg.retrain)? {
                    coord.tx = make_transport(&models, cfg, None)?;
                }
                last_retrain = data.len();
            }
        }
        if t % cfg.replan_every == 0 {
            decision = Some(coord.plan(t, &data)?);
        }
        let d = decision.as_ref().expect("step 0 always plans");
        let offset = t % cfg.replan_every;
        let w = &scenario.weather[t];
        let setpoints: Vec<f64> = (0..n).map(|i| scenario.baseline[t][i] + d.deltas[i]).collect();
        let state = sim.step(&setpoints, w)?;
        let dist = Disturbance::from_weather(w);
        data.timestamps.push(w.timestamp);
        data.disturbances.push(dist);
        for i in 0..n {
            let z: &mut ZoneSeries = &mut data.zones[i];
            z.observations.push(Observation {
                zone_temp: state.temps[i],
                hvac_power: state.heater_powers[i],
            });
            z.actions.push(Action { setpoint: setpoints[i] });
        }
        records.push(StepRecord {
            t,
            timestamp: w.timestamp,
            true_power: state.heater_powers.iter().sum(),
            predicted_power: d.predicted[offset],
            p_max: crate::planners::cap_at(&scenario.events, t).is_finite().then(|| crate::planners::cap_at(&scenario.events, t)),
            deltas: d.deltas.clone(),
            setpoints,
            zone_temps: state.temps.clone(),
            zone_powers: state.heater_powers.clone(),
            episode: d.episode,
            outcome: d.outcome.clone(),
            admm_iters: d.iters,
        });
    }
    Ok(RunLog {
        config: cfg.clone(),
        n_zones: n,
        events: scenario.events.clone(),
        records,
        episodes: coord.episodes,
        timing: coord.timing,
    })
}
