//! Command-line interface: simulate, train, predict, verify and report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use enspost_core::data::join_cases;
use enspost_core::pipeline::{MethodKind, MethodSpec, PipelineConfig, Spatial};
use enspost_core::synthetic::{assemble, generate_station, ScenarioConfig};
use enspost_core::verify::{verify, VerifyOptions, DEFAULT_NOMINAL, RAW};
use enspost_core::{Dataset, EnsembleForecast, Variable};
use log::{info, warn};
use rayon::prelude::*;

use crate::io::{self, parse_date, ForecastSchema, ObservationSchema};
use crate::report;
use crate::runner::{
    default_days, predict_all, save_models, thread_pool, train_all, train_aux_all,
};
use crate::store::ModelStore;

pub const WIND_PRESET: &str = include_str!("../presets/wind-paper.json");
pub const GHI_PRESET: &str = include_str!("../presets/ghi-paper.json");

/// Shipped hyperparameter preset of a variable.
pub fn preset(variable: Variable) -> PipelineConfig {
    let text = match variable {
        Variable::WindSpeed => WIND_PRESET,
        Variable::Ghi => GHI_PRESET,
    };
    serde_json::from_str(text).expect("shipped preset parses")
}

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    /// Invalid arguments or configuration (exit 2).
    Config(anyhow::Error),
    /// Anything that fails while running (exit 1).
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn parse_variable(s: &str) -> Result<Variable, String> {
    s.parse::<Variable>()
        .map_err(|_| format!("unknown variable '{s}' (expected wind or ghi)"))
}

fn parse_method(s: &str) -> Result<MethodSpec, String> {
    MethodSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_day(s: &str) -> Result<i64, String> {
    parse_date(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpatialArg {
    Local,
    Regional,
}

impl From<SpatialArg> for Spatial {
    fn from(s: SpatialArg) -> Self {
        match s {
            SpatialArg::Local => Spatial::Local,
            SpatialArg::Regional => Spatial::Regional,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "enspost",
    version,
    about = "Calibration of ensemble wind and irradiance forecasts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic archive with known truth.
    Simulate(SimulateArgs),
    /// Train one or more methods on rolling windows.
    Train(TrainArgs),
    /// Calibrate forecast runs with stored models.
    Predict(PredictArgs),
    /// Score the raw ensemble and prediction files.
    Verify(VerifyArgs),
    /// Print the overall scores of a verification directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_variable)]
    pub variable: Variable,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub stations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scenario JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub deflation: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_parser = parse_variable)]
    pub variable: Variable,
    #[arg(long)]
    pub forecasts: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// Comma-separated methods such as `emos-tn,mlpex-tn`.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, required = true)]
    pub method: Vec<MethodSpec>,
    /// Pipeline JSON (defaults to the variable's shipped preset).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_days: Option<u32>,
    #[arg(long, value_enum)]
    pub spatial: Option<SpatialArg>,
    /// Caps the epochs of every network.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// First valid date (YYYY-MM-DD).
    #[arg(long, value_parser = parse_day)]
    pub from: Option<i64>,
    #[arg(long, value_parser = parse_day)]
    pub to: Option<i64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, value_parser = parse_method)]
    pub method: MethodSpec,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_day)]
    pub from: Option<i64>,
    #[arg(long, value_parser = parse_day)]
    pub to: Option<i64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub observations: PathBuf,
    /// Prediction files as `NAME=PATH` or `PATH` (named by the file stem).
    #[arg(long = "predictions")]
    pub predictions: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only cases observed at or above this value.
    #[arg(long)]
    pub min_obs: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NOMINAL)]
    pub nominal: f64,
    #[arg(long, default_value = RAW)]
    pub reference: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `verify`.
    #[arg(long)]
    pub input: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let r = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    info!("finished in {:.1} s", start.elapsed().as_secs_f64());
    r
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid JSON in {}", path.display()))
        .map_err(config_err)
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None => ScenarioConfig::for_variable(a.variable, a.seed),
    };
    if cfg.variable != a.variable {
        return Err(config_err(anyhow!(
            "scenario file is for {}, not {}",
            cfg.variable.as_str(),
            a.variable.as_str()
        )));
    }
    cfg.seed = a.seed;
    if let Some(d) = a.days {
        cfg.n_days = d;
    }
    if let Some(s) = a.stations {
        cfg.n_stations = s;
    }
    if let Some(b) = a.bias {
        cfg.ensemble.bias = b;
    }
    if let Some(d) = a.deflation {
        cfg.ensemble.deflation = d;
    }
    cfg.validate().map_err(config_err)?;
    let pool = thread_pool(a.workers)?;
    let archives = pool
        .install(|| {
            (0..cfg.n_stations)
                .into_par_iter()
                .map(|i| generate_station(&cfg, i))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(|e| anyhow!(e))?;
    let scenario = assemble(&cfg, archives).map_err(|e| anyhow!(e))?;
    let out = &a.out;
    io::write_forecasts(io::create(&out.join("forecasts.csv"))?, &scenario.forecasts)?;
    io::write_observations(
        io::create(&out.join("observations.csv"))?,
        &scenario.observations,
    )?;
    io::write_truth(io::create(&out.join("truth.csv"))?, &scenario.truth)?;
    std::fs::write(
        out.join("scenario.json"),
        serde_json::to_string_pretty(&cfg).expect("serializes") + "\n",
    )
    .context("cannot write scenario.json")?;
    info!(
        "{} forecasts for {} stations written to {}",
        scenario.forecasts.len(),
        cfg.n_stations,
        out.display()
    );
    Ok(())
}

fn read_forecasts(data: &DataArgs) -> Result<Vec<EnsembleForecast>, Failure> {
    let file = io::open(&data.forecasts).map_err(config_err)?;
    Ok(
        io::read_forecasts(file, &ForecastSchema::default(), data.variable)
            .with_context(|| format!("in {}", data.forecasts.display()))?,
    )
}

fn load_dataset(data: &DataArgs, observations: &Path) -> Result<Dataset, Failure> {
    let forecasts = read_forecasts(data)?;
    let file = io::open(observations).map_err(config_err)?;
    let obs = io::read_observations(file, &ObservationSchema::default(), data.variable)
        .with_context(|| format!("in {}", observations.display()))?;
    let (dataset, stats) = join_cases(forecasts, &obs).map_err(|e| anyhow!(e))?;
    info!(
        "joined {} forecasts: {} complete, {} without observation",
        stats.forecasts, stats.complete, stats.missing_observation
    );
    Ok(dataset)
}

/// Pipeline configuration from the preset or `--config`, then flags.
pub fn pipeline_config(a: &TrainArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<PipelineConfig>(p)?,
        None => preset(a.data.variable),
    };
    if cfg.variable != a.data.variable {
        return Err(config_err(anyhow!(
            "configuration is for {}, not {}",
            cfg.variable.as_str(),
            a.data.variable.as_str()
        )));
    }
    if let Some(d) = a.train_days {
        cfg.window.train_days = d;
    }
    if let Some(s) = a.spatial {
        cfg.window.spatial = s.into();
    }
    if let Some(e) = a.max_epochs {
        for net in [&mut cfg.mlp, &mut cfg.aux_mlp, &mut cfg.aux_c1d.net] {
            net.optimizer.max_epochs = e;
        }
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = pipeline_config(&a)?;
    for m in &a.method {
        m.validate_for(cfg.variable).map_err(config_err)?;
    }
    let dataset = load_dataset(&a.data, &a.observations)?;
    let days = default_days(&dataset, cfg.window.train_days, a.from, a.to);
    if days.is_empty() {
        return Err(Failure::Runtime(anyhow!("no valid dates to train")));
    }
    let pool = thread_pool(a.workers)?;
    let store = ModelStore::new(&a.models);
    let aux = a
        .method
        .iter()
        .any(|m| m.kind == MethodKind::Mlpex)
        .then(|| train_aux_all(&dataset, &cfg, &days, a.seed, &pool));
    for method in &a.method {
        let outcome = train_all(&dataset, &cfg, method, &days, a.seed, aux.as_ref(), &pool);
        for s in &outcome.skipped {
            warn!(
                "{}: skipped {} on {}: {}",
                method.name(),
                s.scope,
                io::format_date(s.day),
                s.reason
            );
        }
        if outcome.models.is_empty() {
            return Err(Failure::Runtime(anyhow!(
                "{}: every date was skipped",
                method.name()
            )));
        }
        save_models(&store, &cfg, method, a.seed, &outcome)?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<(), Failure> {
    let store = ModelStore::new(&a.models);
    let method = a.method.name();
    let manifest = store
        .read_manifest(&method)?
        .ok_or_else(|| Failure::Runtime(anyhow!("no {method} models in {}", a.models.display())))?;
    let forecasts = read_forecasts(&a.data)?;
    let mut days: Vec<i64> = forecasts.iter().map(|f| f.init_day()).collect();
    days.sort_unstable();
    days.dedup();
    if a.from.is_none() && a.to.is_none() {
        // Without an explicit range, only dates that have models.
        let trained: BTreeSet<String> = manifest
            .entries
            .iter()
            .map(|e| e.valid_date.clone())
            .collect();
        let before = days.len();
        days.retain(|d| trained.contains(&io::format_date(*d)));
        if days.len() < before {
            info!(
                "{} forecast dates without {method} models are skipped",
                before - days.len()
            );
        }
    }
    days.retain(|d| a.from.is_none_or(|f| *d >= f) && a.to.is_none_or(|t| *d <= t));
    if days.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "no forecast runs in the requested range"
        )));
    }
    let pool = thread_pool(a.workers)?;
    let out = predict_all(
        &forecasts,
        &store,
        &method,
        manifest.config.window.spatial,
        &days,
        &pool,
    )?;
    io::write_predictions(io::create(&a.out)?, &out)?;
    info!("{} predictions written to {}", out.len(), a.out.display());
    Ok(())
}

fn prediction_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| s.to_string());
            (name, p)
        }
    }
}

pub fn verify_cmd(a: VerifyArgs) -> Result<(), Failure> {
    if !(a.nominal > 0.0 && a.nominal < 1.0) {
        return Err(config_err(anyhow!(
            "nominal coverage must lie in (0, 1), got {}",
            a.nominal
        )));
    }
    let dataset = load_dataset(&a.data, &a.observations)?;
    let mut predictions = Vec::new();
    for p in &a.predictions {
        let (name, path) = prediction_arg(p);
        let file = io::open(&path).map_err(config_err)?;
        predictions.push((
            name,
            io::read_predictions(file).with_context(|| format!("in {}", path.display()))?,
        ));
    }
    let opts = VerifyOptions {
        nominal: a.nominal,
        min_obs: a.min_obs,
        reference: a.reference.clone(),
        seed: a.seed,
    };
    let rep = verify(&dataset.cases, &predictions, &opts).map_err(|e| match e {
        enspost_core::Error::Config(_) => config_err(anyhow!(e)),
        other => Failure::Runtime(anyhow!(other)),
    })?;
    report::write_report(&a.out, &rep)?;
    info!(
        "{} cases verified; report in {}",
        rep.n_cases,
        a.out.display()
    );
    Ok(())
}

pub fn report_cmd(a: ReportArgs) -> Result<(), Failure> {
    let lines = report::read_overall(&a.input).map_err(config_err)?;
    let table = report::summary_table(&lines);
    std::fs::write(a.input.join(report::SUMMARY), &table).context("cannot write summary")?;
    print!("{table}");
    Ok(())
}
