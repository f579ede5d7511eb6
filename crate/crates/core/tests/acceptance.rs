//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::sync::{Arc, Mutex};
use std::time::Instant;

use common::*;
use dpn_core::admm::{coordinator_solve, verify_assumptions, Blocks, QuadraticLocal};
use dpn_core::control::{
    baseline_run, calibrate_p_max, control_loop, control_loop_observed, daily_events, shipped_scenario, ControlConfig,
    PlannerKind, RunLog, Scenario, ScenarioConfig, SelectionObserver, TransportKind,
};
use dpn_core::data::{protocol_splits, Dataset};
use dpn_core::models::{
    evaluate_model, train_rssm, train_ssm, EvalReport, LcCost, Ssm, SurrogateModel, TrainConfig, ZoneModels,
};
use dpn_core::planners::{candidate_count, ComfortBounds, DrEvent, PlanOutcome, PlannerConfig, TrajectoryBank};
use dpn_core::report::{mean_abs_delta, violation_metrics, RunMetrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 5;
const CONTROL_DAYS: usize = 14;
const HORIZON: usize = 4;

struct Verdicts {
    failed: Vec<u32>,
}

impl Verdicts {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("{} criterion {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn note(text: String) {
    println!("     {text}");
}

fn convex_oracle(v: &mut Verdicts) {
    let mut worst: f64 = 0.0;
    let mut max_iters = 0;
    for seed in 0..20 {
        let inst = convex_instance(3, 4, 10.0, seed);
        let rep = lemma_run(&inst, 500, 1e-11).expect("admm runs");
        worst = worst.max(max_abs_diff(&rep.x_bar, &qp_oracle(&inst)));
        max_iters = max_iters.max(rep.iterations);
    }
    v.record(
        1,
        "convex oracle equivalence",
        worst < 1e-6 && max_iters <= 500,
        format!("max |x̄ - x*|_inf = {worst:.2e} over 20 instances, at most {max_iters} iterations"),
    );
}

fn lemma_suite(v: &mut Verdicts) {
    let mut rho_ok = true;
    let mut worst = LemmaReport {
        max_lagrangian_increase: f64::NEG_INFINITY,
        max_block_dual_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for seed in 0..20 {
        let inst = convex_instance(3, 4, 10.0, seed);
        rho_ok &= verify_assumptions(&inst.spec, &QuadraticLocal { lower: LOWER, upper: UPPER })
            .expect("valid spec")
            .rho_ok;
        let r = lemma_run(&inst, 500, 1e-11).expect("admm runs");
        worst.max_lagrangian_increase = worst.max_lagrangian_increase.max(r.max_lagrangian_increase);
        worst.max_identity_residual = worst.max_identity_residual.max(r.max_identity_residual);
        worst.max_block_dual_excess = worst.max_block_dual_excess.max(r.max_block_dual_excess);
        worst.final_primal_residual = worst.final_primal_residual.max(r.final_primal_residual);
    }
    let pass = rho_ok
        && worst.max_lagrangian_increase <= 1e-9
        && worst.max_identity_residual < 1e-8
        && worst.max_block_dual_excess <= 0.0 + 1e-12
        && worst.final_primal_residual < 1e-6;
    v.record(
        2,
        "descent and dual lemmas",
        pass,
        format!(
            "rho_ok={rho_ok}, max Lagrangian increase {:.1e}, identity residual {:.1e}, max |Δλ_i| - L|Δx̄| {:.1e}, final primal {:.1e}",
            worst.max_lagrangian_increase,
            worst.max_identity_residual,
            worst.max_block_dual_excess,
            worst.final_primal_residual
        ),
    );
}

fn coordinator_closed_form(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=32);
        let h = rng.random_range(1..=16);
        let rho = rng.random_range(0.1..200.0);
        let blocks = |rng: &mut ChaCha8Rng| -> Blocks {
            (0..n).map(|_| (0..h).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
        };
        let u = blocks(&mut rng);
        let l = blocks(&mut rng);
        let p: Vec<f64> = (0..h).map(|_| rng.random_range(-20.0..20.0)).collect();
        let fast = coordinator_solve(&u, &l, &p, rho).expect("valid instance");
        worst = worst.max(max_abs_diff(&fast, &dense_coordinator(&u, &l, &p, rho)));
    }
    v.record(
        3,
        "coordinator closed form",
        worst < 1e-10,
        format!("max deviation from dense LU {worst:.2e} on 1000 instances (N <= 32, H <= 16)"),
    );
}

fn gradient_exactness(v: &mut Verdicts, data: &Dataset, cfg: &TrainConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scale = data.stats.power_scale();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 0;
    while cases < 100 {
        seed += 1;
        let m = Ssm::new(cfg.ssm_arch(), data.stats, seed).expect("valid architecture");
        let s0: Vec<f64> = (0..cfg.d_s).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = rng.random_range(0..data.len() - HORIZON);
        let dists = &data.disturbances[at..at + HORIZON];
        let base: Vec<f64> = (0..HORIZON).map(|_| rng.random_range(19.0..23.0)).collect();
        let delta: Vec<f64> = (0..HORIZON).map(|_| rng.random_range(-2.0..0.0)).collect();
        let cost = LcCost {
            duals: (0..HORIZON).map(|_| rng.random_range(-2.0..2.0)).collect(),
            targets: (0..HORIZON).map(|_| rng.random_range(0.0..3.0)).collect(),
            rho: rng.random_range(1.0..60.0),
            power_scale: scale,
        };
        let r = m.rollout_grad(&s0, &base, &delta, dists, &cost).expect("finite rollout");
        // stay clear of the non-negativity clip on predicted power
        if r.u.iter().any(|u| u.abs() * scale < 1.0) {
            continue;
        }
        let h = 1e-5;
        let mut err: f64 = 0.0;
        let mut size: f64 = 0.0;
        for k in 0..HORIZON {
            let mut dp = delta.clone();
            dp[k] += h;
            let mut dm = delta.clone();
            dm[k] -= h;
            let fp = m.rollout_grad(&s0, &base, &dp, dists, &cost).expect("finite").value;
            let fm = m.rollout_grad(&s0, &base, &dm, dists, &cost).expect("finite").value;
            let fd = (fp - fm) / (2.0 * h);
            err = err.max((fd - r.grad[k]).abs());
            size = size.max(fd.abs());
        }
        worst = worst.max(err / size.max(1e-8));
        cases += 1;
    }
    v.record(
        4,
        "reverse-mode gradient exactness",
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {cases} random cases"),
    );
}

fn acceptance_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        d_s: 16,
        d_h: 16,
        head_hidden: 32,
        decoder_hidden: vec![32, 32],
        epochs: 20,
        windows_per_epoch: 1024,
        horizon: 16,
        seed,
        ..Default::default()
    }
}

struct Trained {
    ssm: Vec<Vec<SurrogateModel>>,
    rssm: Vec<Vec<SurrogateModel>>,
}

fn mape_line(name: &str, reps: &[EvalReport], h: usize) -> (f64, f64, f64) {
    let m: Vec<f64> = reps.iter().map(|r| r.at(h).expect("horizon evaluated").building_mape).collect();
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    note(format!(
        "{name} building MAPE at {:>2} h: mean {mean:.2}%, min {min:.2}%, max {max:.2}%",
        h / 4
    ));
    (mean, min, max)
}

fn model_quality(v: &mut Verdicts, train: &Dataset, test: &Dataset) -> Trained {
    let n = train.n_zones();
    let mut out = Trained { ssm: Vec::new(), rssm: Vec::new() };
    let mut ssm_reps = Vec::new();
    let mut rssm_reps = Vec::new();
    for seed in 0..SEEDS {
        let cfg = acceptance_train_config(seed);
        let t0 = Instant::now();
        let ssm: Vec<SurrogateModel> = (0..n)
            .map(|z| SurrogateModel::Ssm(train_ssm(train, None, z, &cfg).expect("ssm trains").model))
            .collect();
        let t1 = Instant::now();
        let rssm: Vec<SurrogateModel> = (0..n)
            .map(|z| SurrogateModel::Rssm(train_rssm(train, None, z, &cfg).expect("rssm trains").model))
            .collect();
        let t2 = Instant::now();
        ssm_reps.push(evaluate_model(&ZoneModels::new(ssm.clone()), test, &[4, 8, 16], 24).expect("evaluates"));
        let mut zm = ZoneModels::new(rssm.clone());
        zm.seed = seed;
        rssm_reps.push(evaluate_model(&zm, test, &[4, 8, 16], 24).expect("evaluates"));
        note(format!(
            "seed {seed}: trained deterministic in {:.0} s, stochastic in {:.0} s",
            (t1 - t0).as_secs_f64(),
            (t2 - t1).as_secs_f64()
        ));
        out.ssm.push(ssm);
        out.rssm.push(rssm);
    }
    let mut ssm_1h_max = 0.0;
    for h in [4, 8, 16] {
        let (_, _, max) = mape_line("SSM ", &ssm_reps, h);
        if h == 4 {
            ssm_1h_max = max;
        }
    }
    for h in [4, 8, 16] {
        mape_line("RSSM", &rssm_reps, h);
    }
    let trend: Vec<f64> = rssm_reps
        .iter()
        .map(|r| r.at(16).unwrap().building_mape - r.at(4).unwrap().building_mape)
        .collect();
    let worst_trend = trend.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.record(
        5,
        "model quality",
        ssm_1h_max <= 10.0 && worst_trend <= 5.0,
        format!(
            "SSM 1 h MAPE worst seed {ssm_1h_max:.2}% (<= 10%), RSSM 4 h minus 1 h worst seed {worst_trend:+.2} points (<= 5)"
        ),
    );
    out
}

#[derive(Default)]
struct SelectionAudit {
    calls: usize,
    mismatches: usize,
    bank_sizes_wrong: usize,
}

/// Re-scores every bank entry from its stored powers and picks the best by
/// objective, then squared norm, then lexicographic order.
fn rescan(bank: &TrajectoryBank, cost: &LcCost) -> (Vec<f64>, f64) {
    let mut best: Option<(f64, f64, &Vec<f64>)> = None;
    for e in &bank.entries {
        let mut j = 0.0;
        for k in 0..e.delta.len() {
            let r = cost.targets[k] - e.powers[k] / cost.power_scale;
            j += e.delta[k] * e.delta[k] + cost.duals[k] * r + 0.5 * cost.rho * r * r;
        }
        let sq: f64 = e.delta.iter().map(|d| d * d).sum();
        let better = match best {
            None => true,
            Some((bj, bsq, bd)) => {
                j < bj || (j == bj && (sq < bsq || (sq == bsq && e.delta.partial_cmp(bd) == Some(std::cmp::Ordering::Less))))
            }
        };
        if better {
            best = Some((j, sq, &e.delta));
        }
    }
    let (j, _, d) = best.expect("non-empty bank");
    (d.clone(), j)
}

fn audited_observer(audit: Arc<Mutex<SelectionAudit>>) -> SelectionObserver {
    Box::new(move |_zone: usize, bank: &TrajectoryBank, cost: &LcCost, plan: &PlanOutcome| {
        let (delta, j) = rescan(bank, cost);
        let mut a = audit.lock().expect("audit lock");
        a.calls += 1;
        if bank.entries.len() != 81 {
            a.bank_sizes_wrong += 1;
        }
        if delta != plan.delta || (j - plan.objective).abs() > 1e-9 * (1.0 + j.abs()) {
            a.mismatches += 1;
        }
    })
}

struct Run {
    name: String,
    log: RunLog,
    action_events: Vec<DrEvent>,
}

fn controller(kind: PlannerKind, nu: f64, seed: u64, transport: TransportKind) -> ControlConfig {
    ControlConfig {
        kind,
        seed,
        transport,
        planner: PlannerConfig { nu, ..Default::default() },
        ..Default::default()
    }
}

struct Shipped {
    scenario: Scenario,
    windows: Vec<DrEvent>,
    p_max: f64,
    action: Vec<bool>,
    baseline: Vec<f64>,
}

fn shipped(days: usize, end_hour: u32, p_max: Option<f64>) -> Shipped {
    let cfg = ScenarioConfig { days: Some(days), ..Default::default() };
    let mut scenario = shipped_scenario(&cfg, HORIZON).expect("scenario builds");
    let baseline = baseline_run(&scenario).expect("baseline runs");
    let stamps: Vec<_> = scenario.weather[..scenario.n_steps].iter().map(|w| w.timestamp).collect();
    let morning = daily_events(&stamps, cfg.event_start_hour, cfg.event_end_hour, 1.0);
    let cal = calibrate_p_max(&baseline, &morning, cfg.max_reduction).expect("calibrates");
    let p_max = p_max.unwrap_or(cal.p_max);
    let windows = daily_events(&stamps, cfg.event_start_hour, end_hour, p_max);
    let action = cal.event_peaks.iter().map(|p| *p > p_max).collect();
    scenario.events = windows.clone();
    Shipped { scenario, windows, p_max, action, baseline }
}

fn run(s: &Shipped, name: &str, models: &[SurrogateModel], cfg: &ControlConfig, observer: Option<SelectionObserver>) -> Run {
    let t0 = Instant::now();
    let log = control_loop_observed(&s.scenario, models, cfg, observer).expect("control run completes");
    note(format!("{name}: {} steps in {:.0} s", log.records.len(), t0.elapsed().as_secs_f64()));
    let action_events = s
        .windows
        .iter()
        .zip(&s.action)
        .filter(|(_, a)| **a)
        .map(|(e, _)| e.clone())
        .collect();
    Run { name: name.to_string(), log, action_events }
}

fn max_actual(r: &Run) -> f64 {
    violation_metrics(&r.log, &r.log.events)
        .expect("events covered")
        .iter()
        .map(|e| e.actual_pct)
        .fold(0.0, f64::max)
}

fn control_criteria(v: &mut Verdicts, models: &Trained) {
    let s = shipped(CONTROL_DAYS, 9, None);
    let n_action = s.action.iter().filter(|a| **a).count();
    let peak = s.baseline.iter().copied().fold(0.0, f64::max);
    note(format!(
        "{CONTROL_DAYS}-day scenario: cap {:.1} kW ({:.0}% below the highest event peak), {n_action} of {} events need action",
        s.p_max / 1000.0,
        25.0,
        s.windows.len()
    ));
    note(format!("baseline peak over the run {:.1} kW", peak / 1000.0));

    let ddpn10 = run(&s, "DDPN nu=10%", &models.ssm[0], &controller(PlannerKind::Ddpn, 0.10, 0, TransportKind::Inproc), None);
    let ddpn0 = run(&s, "DDPN nu=0%", &models.ssm[0], &controller(PlannerKind::Ddpn, 0.0, 0, TransportKind::Inproc), None);
    let audit = Arc::new(Mutex::new(SelectionAudit::default()));
    let mut sdpn = Vec::new();
    for seed in 0..2u64 {
        sdpn.push(run(
            &s,
            &format!("SDPN nu=0% seed {seed}"),
            &models.rssm[seed as usize],
            &controller(PlannerKind::Sdpn, 0.0, seed, TransportKind::Inproc),
            Some(audited_observer(audit.clone())),
        ));
    }
    let worst = (0..sdpn.len())
        .max_by(|&a, &b| max_actual(&sdpn[a]).total_cmp(&max_actual(&sdpn[b])).then(b.cmp(&a)))
        .expect("two seeds");
    let sdpn5 = run(
        &s,
        &format!("SDPN nu=5% seed {worst}"),
        &models.rssm[worst],
        &controller(PlannerKind::Sdpn, 0.05, worst as u64, TransportKind::Inproc),
        Some(audited_observer(audit.clone())),
    );

    // criterion 6
    let metrics = |r: &Run| RunMetrics::from_log(&r.name, &r.log).expect("events covered");
    let m10 = metrics(&ddpn10);
    let m0 = metrics(&ddpn0);
    let ms: Vec<RunMetrics> = sdpn.iter().map(metrics).collect();
    let m5 = metrics(&sdpn5);
    for m in [&m10, &m0].into_iter().chain(&ms).chain([&m5]) {
        let per_event: Vec<String> = m.events.iter().map(|e| format!("{:.1}/{:.1}", e.actual_pct, e.predicted_pct)).collect();
        note(format!("{} actual/predicted % per event: {}", m.name, per_event.join(" ")));
    }
    let max_of = |m: &RunMetrics, f: fn(&dpn_core::report::EventViolation) -> f64| m.events.iter().map(f).fold(0.0, f64::max);
    let ddpn_pred_ok = max_of(&m10, |e| e.predicted_pct) == 0.0 && m10.events.iter().all(|e| e.unpredicted_steps == 0);
    let ddpn_actual_ok = max_of(&m10, |e| e.actual_pct) <= 10.0;
    let slack_trend = m0.violation_pct > m10.violation_pct;
    let sdpn_ok = ms.iter().all(|m| max_of(m, |e| e.actual_pct) <= 25.0);
    let sdpn5_ok = max_of(&m5, |e| e.actual_pct) == 0.0;
    v.record(
        6,
        "demand-response control",
        n_action >= 10 && ddpn_pred_ok && ddpn_actual_ok && slack_trend && sdpn_ok && sdpn5_ok,
        format!(
            "{n_action} action events; DDPN 10%: max predicted {:.1}%, max actual {:.1}%; mean actual at 0% {:.2}% vs 10% {:.2}%; SDPN 0% max actual {:.1}%; SDPN 5% rerun max actual {:.1}%",
            max_of(&m10, |e| e.predicted_pct),
            max_of(&m10, |e| e.actual_pct),
            m0.violation_pct,
            m10.violation_pct,
            ms.iter().map(|m| max_of(m, |e| e.actual_pct)).fold(0.0, f64::max),
            max_of(&m5, |e| e.actual_pct),
        ),
    );

    // criterion 7
    let runs6: Vec<&Run> = [&ddpn10, &ddpn0].into_iter().chain(&sdpn).chain([&sdpn5]).collect();
    let mut episodes = 0;
    let mut early = 0;
    let mut decreasing = 0;
    let mut last_le_first = 0;
    for r in &runs6 {
        for e in r.log.episodes.iter().filter(|e| !e.residuals.is_empty()) {
            let mut res: Vec<f64> = e.residuals.iter().map(|x| x.primal_residual).collect();
            episodes += 1;
            if res.len() < 20 {
                early += 1;
                // a stopped run keeps its final iterate
                let last = *res.last().expect("non-empty");
                res.resize(20, last);
            }
            let first: f64 = res[..10].iter().sum::<f64>() / 10.0;
            let second: f64 = res[10..20].iter().sum::<f64>() / 10.0;
            if second < first {
                decreasing += 1;
            }
            if res.last() <= res.first() {
                last_le_first += 1;
            }
        }
    }
    v.record(
        7,
        "residual decrease",
        episodes > 0 && decreasing == episodes,
        format!(
            "{decreasing} of {episodes} episodes have mean residual over iterations 11-20 below 1-10 ({early} met the tolerance early and hold their last residual)"
        ),
    );
    note(format!("final residual <= first residual in {last_le_first} of {episodes} episodes"));

    // criterion 8
    let mut worst_ratio: f64 = 0.0;
    let mut all_participate = true;
    for r in &runs6 {
        let means = mean_abs_delta(&r.log, &r.action_events);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = means.iter().copied().fold(0.0, f64::max);
        all_participate &= lo > 0.0;
        worst_ratio = worst_ratio.max(hi / lo);
        note(format!("{} mean |δ| per zone during action events: {:.2}..{:.2} °C", r.name, lo, hi));
    }
    v.record(
        8,
        "effort sharing",
        all_participate && worst_ratio <= 3.0,
        format!("every zone participates: {all_participate}; worst max/min ratio of mean |δ| {worst_ratio:.2} (<= 3)"),
    );

    // criterion 9
    let late = shipped(CONTROL_DAYS, 12, Some(s.p_max));
    let ddpn_noon = run(&late, "DDPN nu=10% until noon", &models.ssm[0], &controller(PlannerKind::Ddpn, 0.10, 0, TransportKind::Inproc), None);
    let post_peak = |r: &Run, events: &[DrEvent]| -> Vec<f64> {
        events
            .iter()
            .map(|e| {
                let to = (e.end + 4).min(r.log.records.len());
                r.log.records[e.end..to].iter().map(|x| x.true_power).fold(0.0, f64::max)
            })
            .collect()
    };
    let action_idx: Vec<usize> = (0..s.windows.len()).filter(|&i| s.action[i]).collect();
    let pick = |v: Vec<f64>| -> Vec<f64> { action_idx.iter().map(|&i| v[i]).collect() };
    let early_peaks = pick(post_peak(&ddpn10, &s.windows));
    let late_peaks = pick(post_peak(&ddpn_noon, &late.windows));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let lower_days = early_peaks.iter().zip(&late_peaks).filter(|(a, b)| b < a).count();
    v.record(
        9,
        "rebound peak mitigation",
        !action_idx.is_empty() && mean(&late_peaks) < mean(&early_peaks),
        format!(
            "mean post-event 1 h peak {:.1} kW ending at noon vs {:.1} kW ending at 9 AM; lower on {lower_days} of {} action days",
            mean(&late_peaks) / 1000.0,
            mean(&early_peaks) / 1000.0,
            action_idx.len()
        ),
    );

    // criterion 12 runs here so its logs join the lattice audit
    let day = shipped(1, 9, None);
    let mut transport_ok = true;
    let mut day_runs = Vec::new();
    for (kind, models) in [(PlannerKind::Ddpn, &models.ssm[0]), (PlannerKind::Sdpn, &models.rssm[0])] {
        let a = control_loop(&day.scenario, models, &controller(kind, 0.1, 7, TransportKind::Inproc)).expect("in-process run");
        let b = control_loop(&day.scenario, models, &controller(kind, 0.1, 7, TransportKind::Socket)).expect("socket run");
        let same = a.deterministic_json().expect("serializes") == b.deterministic_json().expect("serializes");
        note(format!("{kind:?} 1-day run: {} ADMM episodes, identical logs: {same}", a.episodes.iter().filter(|e| !e.residuals.is_empty()).count()));
        transport_ok &= same;
        day_runs.push(a);
        day_runs.push(b);
    }

    // criterion 10
    let bounds = ComfortBounds::default();
    let mut applied = 0usize;
    let mut bad = 0usize;
    let all_logs: Vec<(&RunLog, &Scenario)> = runs6
        .iter()
        .map(|r| (&r.log, &s.scenario))
        .chain([(&ddpn_noon.log, &late.scenario)])
        .chain(day_runs.iter().map(|l| (l, &day.scenario)))
        .collect();
    for (log, sc) in &all_logs {
        for r in &log.records {
            for (i, d) in r.deltas.iter().enumerate() {
                applied += 1;
                let on_lattice = bounds.is_on_lattice(*d) && (d / 0.25).round() * 0.25 == *d;
                if !(-2.0..=0.0).contains(d) || !on_lattice || r.setpoints[i] != sc.baseline[r.t][i] + d {
                    bad += 1;
                }
            }
        }
    }
    v.record(
        10,
        "lattice and bounds safety",
        bad == 0 && applied > 0,
        format!("{bad} of {applied} applied setpoint changes outside [-2, 0] or off the 0.25 °C lattice"),
    );

    // criterion 11
    let count = candidate_count(&bounds, HORIZON, 2).expect("valid lattice");
    let a = audit.lock().expect("audit lock");
    let sdpn_evals: usize = sdpn
        .iter()
        .chain([&sdpn5])
        .flat_map(|r| r.log.episodes.iter().map(|e| e.planning_model_evals))
        .sum();
    v.record(
        11,
        "stochastic bank correctness",
        count == 81 && a.calls > 0 && a.mismatches == 0 && a.bank_sizes_wrong == 0 && sdpn_evals == 0,
        format!(
            "{count} candidates; {} of {} selections differ from the exhaustive rescan; {} model evaluations while scoring",
            a.mismatches, a.calls, sdpn_evals
        ),
    );

    v.record(
        12,
        "transport equivalence",
        transport_ok,
        "socket and in-process logs of seeded 1-day runs are bit-identical for both planners".to_string()
            + if transport_ok { "" } else { " (they differ)" },
    );

    // criterion 13
    let t_ddpn = m10.timing.lc_iter;
    let t_sdpn = ms[0].timing.lc_iter;
    note(format!(
        "per DPN call: DDPN {:.3} ± {:.3} s, SDPN {:.3} ± {:.3} s; per coordinator iteration: DDPN {:.2e} s, SDPN {:.2e} s; SDPN bank setup per episode {:.2} s",
        m10.timing.dpn_call.mean,
        m10.timing.dpn_call.std,
        ms[0].timing.dpn_call.mean,
        ms[0].timing.dpn_call.std,
        m10.timing.coordinator_iter.mean,
        ms[0].timing.coordinator_iter.mean,
        ms[0].timing.lc_setup.mean
    ));
    v.record(
        13,
        "relative planning time",
        t_sdpn.n > 0 && t_ddpn.n > 0 && t_sdpn.mean < t_ddpn.mean,
        format!(
            "mean time per local iteration: SDPN selection {:.2e} ± {:.1e} s vs DDPN shooting {:.2e} ± {:.1e} s",
            t_sdpn.mean, t_sdpn.std, t_ddpn.mean, t_ddpn.std
        ),
    );
}

fn main() {
    let started = Instant::now();
    let mut v = Verdicts { failed: Vec::new() };
    convex_oracle(&mut v);
    lemma_suite(&mut v);
    coordinator_closed_form(&mut v);

    let (train, _val, test) = protocol_splits(&ScenarioConfig::default().protocol).expect("protocol data");
    gradient_exactness(&mut v, &train, &acceptance_train_config(0));
    let models = model_quality(&mut v, &train, &test);
    control_criteria(&mut v, &models);

    println!(
        "acceptance: {} of 13 criteria passed in {:.0} s",
        13 - v.failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !v.failed.is_empty() {
        println!("failed: {:?}", v.failed);
        std::process::exit(1);
    }
}
