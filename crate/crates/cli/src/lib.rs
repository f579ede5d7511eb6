//! Command-line front end: data generation, model training and evaluation,
//! demand-response control runs and reporting. Every command writes under
//! `--out` and appends its artifacts to `manifest.json` there.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dpn_core::control::{
    baseline_run, calibrate_p_max, control_loop, daily_events, shipped_scenario, ControlConfig, ControlError,
    PlannerKind, RunLog, ScenarioConfig, TransportKind,
};
use dpn_core::data::{collect, excitation_schedule, read_dataset_dir, split, write_dataset_dir, DataError, Dataset};
use dpn_core::models::{
    evaluate_model, load_checkpoint, save_checkpoint, train_rssm, train_ssm, Checkpoint, EvalReport, ModelError,
    ModelKind, SurrogateModel, TrainConfig, ZoneModels,
};
use dpn_core::report::{power_chart, residual_chart, slack_chart, MetricsReport, ModelMetrics, ReportError, RunMetrics};
use dpn_core::sim::{read_weather_csv, write_weather_csv, SimError, Simulator};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpn", version, about = "Distributed planning networks for building demand response")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON file overriding the default scenario, training and control settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every artifact.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed of the command's random choices.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic winter weather of the protocol months as CSV.
    GenWeather,
    /// Run the excitation protocol and write the train/val/test datasets.
    Collect {
        /// Weather CSV to use instead of the synthetic trace.
        #[arg(long)]
        weather: Option<PathBuf>,
    },
    /// Fit per-zone SSM and RSSM checkpoints.
    Train {
        /// Number of training seeds, starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "both")]
        model: ModelChoice,
    },
    /// Score the trained checkpoints on the test month.
    Evaluate {
        /// Forecast horizons, e.g. `1h,2h,4h`, `30m` or plain step counts.
        #[arg(long, default_value = "1h,2h,4h")]
        horizons: String,
        /// Steps between evaluation origins.
        #[arg(long, default_value_t = 24)]
        stride: usize,
    },
    /// Run the receding-horizon controller over the test month.
    Control {
        #[arg(long, default_value = "ddpn")]
        planner: PlannerKind,
        /// Fraction by which planning undershoots the cap.
        #[arg(long)]
        slack: Option<f64>,
        #[arg(long, default_value = "inproc")]
        transport: TransportKind,
        /// Training seed of the checkpoints to control with.
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        /// Number of days of the test month to run.
        #[arg(long)]
        days: Option<usize>,
        /// Hour at which the daily event ends.
        #[arg(long)]
        event_end: Option<u32>,
        /// Run directory name under `runs/`.
        #[arg(long)]
        name: Option<String>,
    },
    /// Aggregate run logs into metric tables and charts.
    Report {
        /// Directory holding one sub-directory per run; defaults to `<out>/runs`.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelChoice {
    Ssm,
    Rssm,
    Both,
}

/// Settings shared by every command, read from `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub control: ControlConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            train: TrainConfig {
                d_s: 16,
                d_h: 16,
                head_hidden: 32,
                decoder_hidden: vec![32, 32],
                epochs: 20,
                windows_per_epoch: 1024,
                horizon: 16,
                ..Default::default()
            },
            control: ControlConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub seed: Option<u64>,
    pub config: CliConfig,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

fn append_manifest(out: &Path, entry: ManifestEntry) -> Result<(), CliError> {
    let path = out.join("manifest.json");
    let mut manifest: Manifest = if path.exists() {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema {
            path: path.clone(),
            msg: e.to_string(),
        })?
    } else {
        Manifest::default()
    };
    manifest.entries.push(entry);
    write_json(&path, &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn rel(out: &Path, path: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

/// Parses `1h`, `30m`, `15min` or a plain step count into steps of `dt_s`.
pub fn parse_horizons(list: &str, dt_s: f64) -> Result<Vec<usize>, CliError> {
    let bad = |item: &str| CliError::Usage(format!("invalid horizon {item:?}; use e.g. 1h, 30m or 4"));
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (num, unit_s) = if let Some(n) = item.strip_suffix('h') {
            (n, Some(3600.0))
        } else if let Some(n) = item.strip_suffix("min").or_else(|| item.strip_suffix('m')) {
            (n, Some(60.0))
        } else {
            (item, None)
        };
        let value = f64::from_str(num).map_err(|_| bad(item))?;
        let steps = match unit_s {
            Some(s) => value * s / dt_s,
            None => value,
        };
        if !(steps >= 1.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(bad(item));
        }
        out.push(steps.round() as usize);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no horizons given".into()));
    }
    Ok(out)
}

fn model_dir(out: &Path, kind: ModelKind, seed: u64) -> PathBuf {
    let name = match kind {
        ModelKind::Ssm => "ssm",
        ModelKind::Rssm => "rssm",
    };
    out.join("models").join(name).join(format!("seed{seed}"))
}

fn load_models(dir: &Path, n_zones: usize) -> Result<Vec<SurrogateModel>, CliError> {
    (0..n_zones)
        .map(|z| {
            let path = dir.join(format!("zone{z:02}.json"));
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "missing checkpoint {}; run `train` first",
                    path.display()
                )));
            }
            Ok(load_checkpoint(&path)?.to_model()?)
        })
        .collect()
}

/// Trained seeds found under `models/<kind>/`, in ascending order.
fn trained_seeds(out: &Path, kind: ModelKind) -> Result<Vec<u64>, CliError> {
    let root = model_dir(out, kind, 0);
    let root = root.parent().expect("seed directory has a parent");
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut seeds: Vec<u64> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    Ok(seeds)
}

fn dataset(out: &Path, part: &str) -> Result<Dataset, CliError> {
    let dir = out.join("dataset").join(part);
    if !dir.exists() {
        return Err(CliError::Usage(format!("missing dataset {}; run `collect` first", dir.display())));
    }
    Ok(read_dataset_dir(&dir)?)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(cli.global.config.as_deref())?;
    let out = cli.global.out.clone();
    let seed = cli.global.seed;
    let (name, artifacts) = match cli.command {
        Command::GenWeather => ("gen-weather", gen_weather(&out, &mut cfg, seed)?),
        Command::Collect { weather } => ("collect", collect_data(&out, &mut cfg, seed, weather.as_deref())?),
        Command::Train { seeds, model } => ("train", train(&out, &cfg, seed.unwrap_or(0), seeds, model)?),
        Command::Evaluate { horizons, stride } => ("evaluate", evaluate(&out, &cfg, &horizons, stride)?),
        Command::Control {
            planner,
            slack,
            transport,
            model_seed,
            days,
            event_end,
            name,
        } => {
            cfg.control.kind = planner;
            cfg.control.transport = transport;
            if let Some(nu) = slack {
                cfg.control.planner.nu = nu;
            }
            if let Some(s) = seed {
                cfg.control.seed = s;
            }
            if days.is_some() {
                cfg.scenario.days = days;
            }
            if let Some(h) = event_end {
                cfg.scenario.event_end_hour = h;
            }
            ("control", control(&out, &cfg, model_seed, name)?)
        }
        Command::Report { runs } => {
            let runs = runs.unwrap_or_else(|| out.join("runs"));
            ("report", report(&out, &runs)?)
        }
    };
    append_manifest(
        &out,
        ManifestEntry {
            command: name.to_string(),
            seed,
            config: cfg,
            artifacts,
        },
    )
}

fn gen_weather(out: &Path, cfg: &mut CliConfig, seed: Option<u64>) -> Result<Vec<String>, CliError> {
    if let Some(s) = seed {
        cfg.scenario.protocol.weather_seed = s;
    }
    create_dir(out)?;
    let path = out.join("weather.csv");
    let weather = cfg.scenario.protocol.weather_trace();
    write_weather_csv(&weather, fs::File::create(&path).map_err(io_err(&path))?)?;
    eprintln!("wrote {} weather records to {}", weather.len(), path.display());
    Ok(vec![rel(out, &path)])
}

fn collect_data(
    out: &Path,
    cfg: &mut CliConfig,
    seed: Option<u64>,
    weather: Option<&Path>,
) -> Result<Vec<String>, CliError> {
    let p = &mut cfg.scenario.protocol;
    if let Some(s) = seed {
        p.excitation_seed = s;
    }
    let trace = match weather {
        Some(path) => {
            let records = read_weather_csv(fs::File::open(path).map_err(io_err(path))?)?;
            if records.is_empty() {
                return Err(CliError::Schema {
                    path: path.to_path_buf(),
                    msg: "no weather records".into(),
                });
            }
            records
        }
        None => p.weather_trace(),
    };
    let mut sim = Simulator::from_config(&p.building(), p.initial_temp, p.dt_s)?;
    let schedule = excitation_schedule(sim.n_zones(), trace.len(), p.excitation_seed);
    let all = collect(&mut sim, &schedule, &trace)?;
    let (train, val, test) = split(&all, &p.train_months, p.val_month, p.test_month)?;
    let mut artifacts = Vec::new();
    for (part, data) in [("train", &train), ("val", &val), ("test", &test)] {
        let dir = out.join("dataset").join(part);
        create_dir(&dir)?;
        write_dataset_dir(data, &dir)?;
        eprintln!("{part}: {} steps x {} zones", data.len(), data.n_zones());
        artifacts.push(rel(out, &dir));
    }
    Ok(artifacts)
}

fn train(out: &Path, cfg: &CliConfig, first_seed: u64, seeds: u64, which: ModelChoice) -> Result<Vec<String>, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let train = dataset(out, "train")?;
    let val = dataset(out, "val")?;
    let kinds: &[ModelKind] = match which {
        ModelChoice::Ssm => &[ModelKind::Ssm],
        ModelChoice::Rssm => &[ModelKind::Rssm],
        ModelChoice::Both => &[ModelKind::Ssm, ModelKind::Rssm],
    };
    let mut artifacts = Vec::new();
    for seed in first_seed..first_seed + seeds {
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        for &kind in kinds {
            let dir = model_dir(out, kind, seed);
            create_dir(&dir)?;
            let started = Instant::now();
            for zone in 0..train.n_zones() {
                let (model, val_loss) = match kind {
                    ModelKind::Ssm => {
                        let t = train_ssm(&train, Some(&val), zone, &tc)?;
                        (SurrogateModel::Ssm(t.model), t.curve.val_loss.last().copied())
                    }
                    ModelKind::Rssm => {
                        let t = train_rssm(&train, Some(&val), zone, &tc)?;
                        (SurrogateModel::Rssm(t.model), t.curve.val_loss.last().copied())
                    }
                };
                let path = dir.join(format!("zone{zone:02}.json"));
                save_checkpoint(&path, &Checkpoint::from_model(&model, seed, Some(tc.clone())))?;
                if let Some(l) = val_loss {
                    eprintln!("{kind:?} seed {seed} zone {zone}: validation loss {l:.4}");
                }
            }
            eprintln!(
                "{kind:?} seed {seed}: {} zones in {:.0} s",
                train.n_zones(),
                started.elapsed().as_secs_f64()
            );
            artifacts.push(rel(out, &dir));
        }
    }
    Ok(artifacts)
}

fn evaluate(out: &Path, _cfg: &CliConfig, horizons: &str, stride: usize) -> Result<Vec<String>, CliError> {
    let test = dataset(out, "test")?;
    let steps = parse_horizons(horizons, test.dt_s)?;
    let eval_dir = out.join("evaluation");
    let mut metrics = Vec::new();
    let mut pending: Vec<(PathBuf, EvalReport)> = Vec::new();
    for kind in [ModelKind::Ssm, ModelKind::Rssm] {
        let seeds = trained_seeds(out, kind)?;
        let mut reports = Vec::new();
        for &seed in &seeds {
            let models = load_models(&model_dir(out, kind, seed), test.n_zones())?;
            let mut zm = ZoneModels::new(models);
            zm.seed = seed;
            let r = evaluate_model(&zm, &test, &steps, stride)?;
            pending.push((eval_dir.join(format!("{kind:?}_seed{seed}.json").to_lowercase()), r.clone()));
            reports.push(r);
        }
        if !reports.is_empty() {
            metrics.push(ModelMetrics::from_reports(&format!("{kind:?}").to_uppercase(), &reports)?);
        }
    }
    if metrics.is_empty() {
        return Err(CliError::Usage("no trained checkpoints under models/; run `train` first".into()));
    }
    let report = MetricsReport {
        runs: Vec::new(),
        models: metrics.clone(),
    };
    println!("{:<6}{:>9}{:>10}{:>10}{:>10}", "model", "horizon", "mean %", "min %", "max %");
    for m in &metrics {
        for s in &m.building_mape {
            let hours = s.horizon as f64 * test.dt_s / 3600.0;
            println!("{:<6}{:>8}h{:>10.2}{:>10.2}{:>10.2}", m.name, hours, s.mean, s.min, s.max);
        }
    }
    create_dir(&eval_dir)?;
    let mut artifacts = Vec::new();
    for (path, r) in &pending {
        write_json(path, r)?;
        artifacts.push(rel(out, path));
    }
    let path = eval_dir.join("models.json");
    write_json(&path, &metrics)?;
    artifacts.push(rel(out, &path));
    let path = eval_dir.join("models.csv");
    fs::write(&path, report.models_csv()).map_err(io_err(&path))?;
    artifacts.push(rel(out, &path));
    Ok(artifacts)
}

fn control(out: &Path, cfg: &CliConfig, model_seed: u64, name: Option<String>) -> Result<Vec<String>, CliError> {
    cfg.control.validate()?;
    let sc = &cfg.scenario;
    let mut scenario = shipped_scenario(sc, cfg.control.planner.horizon)?;
    let baseline = baseline_run(&scenario)?;
    let stamps: Vec<_> = scenario.weather[..scenario.n_steps].iter().map(|w| w.timestamp).collect();
    let calibration = calibrate_p_max(
        &baseline,
        &daily_events(&stamps, sc.event_start_hour, sc.event_end_hour, 1.0),
        sc.max_reduction,
    )?;
    scenario.events = daily_events(&stamps, sc.event_start_hour, sc.event_end_hour, calibration.p_max);
    eprintln!(
        "{} steps, {} events, cap {:.1} kW, {} events need action",
        scenario.n_steps,
        scenario.events.len(),
        calibration.p_max / 1000.0,
        calibration.action_events
    );

    let kind = match cfg.control.kind {
        PlannerKind::Ddpn => ModelKind::Ssm,
        PlannerKind::Sdpn => ModelKind::Rssm,
    };
    let models = load_models(&model_dir(out, kind, model_seed), scenario.sim.n_zones())?;
    let started = Instant::now();
    let log: RunLog = control_loop(&scenario, &models, &cfg.control)?;
    eprintln!("control run finished in {:.0} s", started.elapsed().as_secs_f64());

    let name = name.unwrap_or_else(|| {
        let planner = format!("{:?}", cfg.control.kind).to_lowercase();
        format!("{planner}_slack{:02.0}", cfg.control.planner.nu * 100.0)
    });
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::Usage(format!("invalid run name {name:?}")));
    }
    let dir = out.join("runs").join(&name);
    log.save(&dir)?;
    let metrics = RunMetrics::from_log(&name, &log)?;
    println!("{:>5}{:>12}{:>12}", "event", "actual %", "predicted %");
    for (i, e) in metrics.events.iter().enumerate() {
        println!("{i:>5}{:>12.1}{:>12.1}", e.actual_pct, e.predicted_pct);
    }
    Ok(vec![rel(out, &dir)])
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn report(out: &Path, runs_dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names: Vec<String> = if runs_dir.is_dir() {
        fs::read_dir(runs_dir)
            .map_err(io_err(runs_dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("run.json").is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect()
    } else {
        Vec::new()
    };
    if names.is_empty() {
        return Err(CliError::Usage(format!("no run logs found in {}", runs_dir.display())));
    }
    names.sort();

    // Everything is computed before the first file is written.
    let mut files: Vec<(String, String)> = Vec::new();
    let mut metrics = MetricsReport::default();
    for name in &names {
        let log = RunLog::load(&runs_dir.join(name))?;
        let m = RunMetrics::from_log(name, &log)?;
        let stem = file_stem(name);
        let (from, to) = match log.events.first() {
            Some(e) => (e.start.saturating_sub(24), (e.end + 24).min(log.records.len())),
            None => (0, log.records.len().min(96)),
        };
        files.push((format!("power_{stem}.svg"), power_chart(&log, from, to, &format!("{name}: building power"))));
        files.push((format!("residuals_{stem}.svg"), residual_chart(&log, &format!("{name}: primal residual"))));
        metrics.runs.push(m);
    }
    let models_path = out.join("evaluation").join("models.json");
    if models_path.is_file() {
        metrics.models = read_json(&models_path)?;
    }
    files.push(("slack.svg".into(), slack_chart(&metrics.runs, "Event violations by run")));
    files.push(("violations.csv".into(), metrics.violations_csv()));
    files.push(("deltas.csv".into(), metrics.deltas_csv()));
    files.push(("timing.csv".into(), metrics.timing_csv()));
    files.push(("models.csv".into(), metrics.models_csv()));
    files.push((
        "metrics.json".into(),
        serde_json::to_string_pretty(&metrics).expect("plain data serializes"),
    ));

    let dir = out.join("report");
    create_dir(&dir)?;
    let mut artifacts = Vec::new();
    for (file, body) in files {
        let path = dir.join(file);
        fs::write(&path, body).map_err(io_err(&path))?;
        artifacts.push(rel(out, &path));
    }
    print!("{}", metrics.violations_csv());
    Ok(artifacts)
}
