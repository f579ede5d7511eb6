use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::models::{LcCost, RssmState, SurrogateModel};
use crate::planners::{
    ddpn_solve, sdpn_build_bank, sdpn_select, DdpnConfig, HorizonModel, PlanOutcome, PlannerConfig, RssmZone,
    SsmZone, TrajectoryBank,
};

use super::message::{Message, ZoneContext};
use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    /// Gradient shooting on a deterministic model.
    Ddpn,
    /// Enumerated plans scored on stochastic worst cases.
    Sdpn,
}

impl std::str::FromStr for PlannerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ddpn" => Ok(Self::Ddpn),
            "sdpn" => Ok(Self::Sdpn),
            other => Err(format!("unknown planner {other:?}, expected ddpn or sdpn")),
        }
    }
}

/// Called after every stochastic selection with the zone, the bank, the
/// objective and the chosen plan.
pub type SelectionObserver = Box<dyn FnMut(usize, &TrajectoryBank, &LcCost, &PlanOutcome) + Send>;

enum Start {
    Ssm(Vec<f64>),
    Rssm(RssmState),
}

struct Episode {
    ctx: ZoneContext,
    start: Start,
    bank: Option<TrajectoryBank>,
    delta: Vec<f64>,
    last_iter: Option<usize>,
}

/// The local controller of one zone.
pub struct LcWorker {
    pub zone: usize,
    model: SurrogateModel,
    planner: PlannerConfig,
    ddpn: DdpnConfig,
    episode: Option<Episode>,
}

impl LcWorker {
    pub fn new(zone: usize, model: SurrogateModel, planner: PlannerConfig, kind: PlannerKind, ddpn: DdpnConfig) -> Result<Self, ControlError> {
        match (kind, &model) {
            (PlannerKind::Ddpn, SurrogateModel::Ssm(_)) | (PlannerKind::Sdpn, SurrogateModel::Rssm(_)) => {}
            _ => {
                return Err(ControlError::Config(format!(
                    "zone {zone}: {kind:?} cannot plan with a {:?} model",
                    model.kind()
                )))
            }
        }
        Ok(Self {
            zone,
            model,
            planner,
            ddpn,
            episode: None,
        })
    }

    pub fn power_scale(&self) -> f64 {
        self.model.stats().power_scale()
    }

    fn observe(&mut self, episode: usize, ctx: ZoneContext) -> Result<Message, ControlError> {
        let n_lags = self.model.n_lags();
        let history = ctx.history.last(n_lags)?;
        let start = match &self.model {
            SurrogateModel::Ssm(m) => Start::Ssm(m.encode(&history)?),
            SurrogateModel::Rssm(m) => Start::Rssm(m.filter(&history)?),
        };
        let h = ctx.base_setpoints.len();
        let b = &self.planner.bounds;
        let init = vec![b.project(-1.0); h];
        let lower = vec![b.lower; h];
        let (p_bu, p_lb, p_init) = self.with_zone(&ctx, &start, |z| {
            Ok((z.predict(&vec![0.0; h])?, z.predict(&lower)?, z.predict(&init)?))
        })?;
        self.episode = Some(Episode {
            ctx,
            start,
            bank: None,
            delta: init,
            last_iter: None,
        });
        Ok(Message::Forecast {
            zone: self.zone,
            episode,
            p_bu,
            p_lb,
            p_init,
        })
    }

    fn with_zone<T>(
        &self,
        ctx: &ZoneContext,
        start: &Start,
        f: impl FnOnce(&dyn HorizonModel) -> Result<T, crate::planners::PlanError>,
    ) -> Result<T, ControlError> {
        let base = ctx.base_setpoints.clone();
        let dists = ctx.disturbances.clone();
        Ok(match (&self.model, start) {
            (SurrogateModel::Ssm(m), Start::Ssm(s0)) => f(&SsmZone::new(m, s0.clone(), base, dists)?)?,
            (SurrogateModel::Rssm(m), Start::Rssm(st)) => {
                f(&RssmZone::new(m, st.clone(), base, dists, self.planner.k_samples, ctx.seed)?)?
            }
            _ => unreachable!("start state always matches the model"),
        })
    }

    fn plan(
        &mut self,
        iter: usize,
        u_bar: Vec<f64>,
        lambda: Vec<f64>,
        observer: &mut Option<SelectionObserver>,
    ) -> Result<Message, ControlError> {
        let scale = self.power_scale();
        let zone = self.zone;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| ControlError::Protocol(format!("zone {zone}: power target before any observation")))?;
        if ep.last_iter.is_some_and(|k| iter <= k) {
            return Err(ControlError::Protocol(format!("zone {zone}: iteration {iter} is not increasing")));
        }
        ep.last_iter = Some(iter);
        let cost = LcCost {
            duals: lambda,
            targets: u_bar,
            rho: self.planner.rho,
            power_scale: scale,
        };
        let base = ep.ctx.base_setpoints.clone();
        let dists = ep.ctx.disturbances.clone();
        let mut setup_s = 0.0;
        let (plan, compute_s, model_evals) = match (&self.model, &ep.start) {
            (SurrogateModel::Ssm(m), Start::Ssm(s0)) => {
                let z = SsmZone::new(m, s0.clone(), base, dists)?;
                let t0 = Instant::now();
                let plan = ddpn_solve(&z, &cost, &self.planner.bounds, &self.ddpn, &ep.delta)?;
                (plan, t0.elapsed().as_secs_f64(), z.evaluations())
            }
            (SurrogateModel::Rssm(m), Start::Rssm(st)) => {
                if ep.bank.is_none() {
                    let t0 = Instant::now();
                    let z = RssmZone::new(m, st.clone(), base, dists, self.planner.k_samples, ep.ctx.seed)?;
                    ep.bank = Some(sdpn_build_bank(&z, &self.planner.bounds, self.planner.block, self.planner.candidate_cap)?);
                    setup_s = t0.elapsed().as_secs_f64();
                }
                let bank = ep.bank.as_ref().expect("bank built above");
                let t0 = Instant::now();
                let plan = sdpn_select(bank, &cost)?;
                let compute_s = t0.elapsed().as_secs_f64();
                if let Some(obs) = observer.as_mut() {
                    obs(zone, bank, &cost, &plan);
                }
                // selection reads the bank only; no model is reachable from it
                (plan, compute_s, 0)
            }
            _ => unreachable!("start state always matches the model"),
        };
        ep.delta = plan.delta.clone();
        Ok(Message::PowerReply {
            zone,
            iter,
            u_pred: plan.u_pred.iter().map(|p| p / scale).collect(),
            delta: plan.delta,
            compute_s,
            setup_s,
            model_evals,
        })
    }
}

/// All local controllers behind one endpoint; answers messages in order.
pub struct LcHost {
    pub workers: Vec<LcWorker>,
    pub horizon: usize,
    observer: Option<SelectionObserver>,
}

impl LcHost {
    pub fn new(models: &[SurrogateModel], planner: &PlannerConfig, kind: PlannerKind, ddpn: DdpnConfig) -> Result<Self, ControlError> {
        planner.validate()?;
        let workers = models
            .iter()
            .enumerate()
            .map(|(i, m)| LcWorker::new(i, m.clone(), planner.clone(), kind, ddpn))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            workers,
            horizon: planner.horizon,
            observer: None,
        })
    }

    pub fn set_selection_observer(&mut self, observer: Option<SelectionObserver>) {
        self.observer = observer;
    }

    pub fn n_zones(&self) -> usize {
        self.workers.len()
    }

    /// Replies produced by one incoming message. Failures are answered
    /// with an abort naming the zone.
    pub fn handle(&mut self, msg: Message) -> Vec<Message> {
        let zone = msg.zone();
        match self.try_handle(msg) {
            Ok(r) => r,
            Err(e) => {
                let reason = match zone {
                    Some(z) => format!("zone {z}: {e}"),
                    None => e.to_string(),
                };
                vec![Message::Abort { reason }]
            }
        }
    }

    fn try_handle(&mut self, msg: Message) -> Result<Vec<Message>, ControlError> {
        msg.validate(self.n_zones(), self.horizon)?;
        match msg {
            Message::Observe { zone, episode, context } => Ok(vec![self.workers[zone].observe(episode, context)?]),
            Message::PowerTarget { zone, iter, u_bar, lambda } => {
                Ok(vec![self.workers[zone].plan(iter, u_bar, lambda, &mut self.observer)?])
            }
            Message::Converged { .. } | Message::Abort { .. } => {
                self.workers.iter_mut().for_each(|w| w.episode = None);
                Ok(vec![])
            }
            Message::Forecast { .. } | Message::PowerReply { .. } => {
                Err(ControlError::Protocol("local controllers do not accept replies".into()))
            }
        }
    }
}
