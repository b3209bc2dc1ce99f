//! Config-driven command line front end.
//!
//! Every subcommand reads one JSON config, applies `--set key.path=value`
//! overrides and `--seed`, validates the result against its schema (unknown
//! keys are rejected) and writes its artifacts plus `run-manifest.json` to
//! the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::alignment::frequency_align;
use crate::empirical::{
    pseudo_thai, run_recursive, evaluation_windows, Period, PseudoThaiConfig, RecursiveConfig,
};
use crate::error::Error;
use crate::evaluation::{cumsfe, evaluate, DmOptions, ForecastRecord};
use crate::forecast::{
    mixed_lag_spec, reference_ratio, rolling_forecast, Ar1Forecaster, FaLstmForecaster,
    Forecaster, LstmSettings, MidasForecaster, SaLstmForecaster, Split, UMidasForecaster,
    UniLstmForecaster,
};
use crate::io;
use crate::lstm::parameter_count;
use crate::rng::RandomSeed;
use crate::selection::{grid_search, GridEvaluator, HyperChoice, HyperGrid};
use crate::series::MixedFrequencyDataset;
use crate::simulation::{gen_dgp, run_monte_carlo, DgpConfig, McExperiment};

pub const OUTPUT_DIR_ENV: &str = "MIXFREQ_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "mixfreq-out";

#[derive(Debug, Parser)]
#[command(name = "mixfreq", version, about = "Mixed-frequency forecasting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file.
    pub config: PathBuf,
    /// Override a config key, e.g. `--set dgp.t=100`. Values are parsed as
    /// JSON and fall back to strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed; replaces the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory; beats the config's `output_dir` and the
    /// MIXFREQ_OUTPUT_DIR environment variable.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset (simulation DGP or pseudo-Thai) and write it as CSVs.
    Simulate(Common),
    /// Write the frequency-aligned design of a dataset.
    Align(Common),
    /// Estimate one model and write its parameters.
    Fit(Common),
    /// Rolling forecasts without re-estimation, or the recursive exercise.
    Forecast(Common),
    /// Hyperparameter grid search for an LSTM model.
    Gridsearch(Common),
    /// Monte Carlo comparison.
    Montecarlo(Common),
    /// Accuracy report from forecast CSVs.
    Evaluate(Common),
    /// CUMSFE plot data for a model against a benchmark.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::Align(c) => ("align", c),
            Command::Fit(c) => ("fit", c),
            Command::Forecast(c) => ("forecast", c),
            Command::Gridsearch(c) => ("gridsearch", c),
            Command::Montecarlo(c) => ("montecarlo", c),
            Command::Evaluate(c) => ("evaluate", c),
            Command::Report(c) => ("report", c),
        }
    }
}

/// Failure classes with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> Value {
        match self {
            CliError::Schema { field, message } => {
                serde_json::json!({ "error": "config", "field": field, "message": message })
            }
            CliError::Runtime(e) => serde_json::json!({ "error": "runtime", "message": format!("{e:#}") }),
        }
    }
}

fn schema(field: impl Into<String>, message: impl ToString) -> CliError {
    CliError::Schema {
        field: field.into(),
        message: message.to_string(),
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        // validation failures raised by the library count as schema errors
        match e.downcast_ref::<Error>() {
            Some(Error::Config { field, message }) => schema(field.clone(), message),
            _ => CliError::Runtime(e),
        }
    }
}

/// Prefixes the field of a library validation error with its config key.
fn within<T>(prefix: &str, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        Error::Config { field, message } => schema(format!("{prefix}.{field}"), message),
        other => other.into(),
    })
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::from(anyhow::Error::new(e))
    }
}

/// Sets `path` (dot separated) in a JSON object tree, creating objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(schema(path, "empty key in override path"));
    }
    let mut cur = root;
    for (i, k) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| schema(keys[..i].join("."), "override goes through a non-object"))?;
        if i + 1 == keys.len() {
            obj.insert((*k).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*k).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| schema(s, "override must look like key.path=value"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn get_path<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |v, k| v.get(k))
}

/// Config keys the `--seed` flag writes to, per subcommand. A key is only
/// set when its parent object exists in the config.
fn seed_paths(sub: &str) -> &'static [&'static str] {
    match sub {
        "simulate" => &["dgp.seed", "pseudo_thai.seed"],
        "forecast" => &["rolling.seed", "recursive.seed"],
        "evaluate" | "report" | "align" => &[],
        _ => &["seed"],
    }
}

/// Typed deserialization with the failing key path in the error.
fn typed<T: DeserializeOwned>(v: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { String::new() } else { path }, e.into_inner())
    })
}

/// A config after overrides, with everything needed for the run manifest.
pub struct LoadedConfig {
    pub value: Value,
    pub base_dir: PathBuf,
    pub output_dir: PathBuf,
    pub hash: String,
}

pub fn load_config(sub: &str, common: &Common) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| schema("config", format!("{}: {e}", common.config.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| schema("config", e))?;
    if !value.is_object() {
        return Err(schema("config", "top level must be an object"));
    }
    for s in &common.set {
        let (k, v) = parse_override(s)?;
        set_path(&mut value, &k, v)?;
    }
    if let Some(seed) = common.seed {
        for p in seed_paths(sub) {
            let parent = p.rsplit_once('.').map(|(a, _)| a);
            if parent.is_none_or(|a| get_path(&value, a).is_some_and(Value::is_object)) {
                set_path(&mut value, p, Value::from(seed))?;
            }
        }
    }
    let from_config = match value.as_object_mut().and_then(|o| o.remove("output_dir")) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(schema("output_dir", "must be a string")),
    };
    let canonical = serde_json::to_string(&value).map_err(|e| schema("config", e))?;
    let hash: String = Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let base_dir = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    // the flag and the environment are relative to the working directory,
    // a config entry to the config file
    let output_dir = common
        .output_dir
        .clone()
        .or_else(|| from_config.map(|p| resolve(&base_dir, &p)))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    Ok(LoadedConfig {
        value,
        base_dir,
        output_dir,
        hash,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    config: &'a Value,
    seeds: BTreeMap<String, Value>,
    outputs: Vec<String>,
}

/// Model choices for `fit` and rolling `forecast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Midas(MidasForecaster),
    UMidas(UMidasForecaster),
    Ar1,
    FaLstm(FaLstmForecaster),
    SaLstm(SaLstmForecaster),
    UniLstm(UniLstmForecaster),
}

impl ModelSpec {
    pub fn build(&self) -> Box<dyn Forecaster> {
        match self {
            ModelSpec::Midas(m) => Box::new(m.clone()),
            ModelSpec::UMidas(m) => Box::new(m.clone()),
            ModelSpec::Ar1 => Box::new(Ar1Forecaster),
            ModelSpec::FaLstm(m) => Box::new(m.clone()),
            ModelSpec::SaLstm(m) => Box::new(m.clone()),
            ModelSpec::UniLstm(m) => Box::new(m.clone()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    #[serde(default)]
    dgp: Option<DgpConfig>,
    #[serde(default)]
    pseudo_thai: Option<PseudoThaiConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlignConfig {
    dataset: PathBuf,
    h_m: usize,
    lags: usize,
    #[serde(default)]
    low_lags: Option<usize>,
    #[serde(default)]
    ar_lags: Option<usize>,
    #[serde(default)]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    dataset: PathBuf,
    h_m: usize,
    model: ModelSpec,
    /// Estimate on the first periods only.
    #[serde(default)]
    train_periods: Option<usize>,
    #[serde(default)]
    seed: RandomSeed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedModel {
    name: String,
    model: ModelSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RollingConfig {
    horizons: Vec<usize>,
    models: Vec<NamedModel>,
    #[serde(default)]
    split: Split,
    /// Forecasts of stochastic models are averaged over this many fits.
    #[serde(default = "one")]
    estimations: usize,
    #[serde(default)]
    seed: RandomSeed,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastConfig {
    dataset: PathBuf,
    #[serde(default)]
    rolling: Option<RollingConfig>,
    #[serde(default)]
    recursive: Option<RecursiveConfig>,
}

/// LSTM family searched by `gridsearch`; grid values for timesteps and lag
/// orders override the defaults given here.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum GridModel {
    FaLstm {
        #[serde(default = "one")]
        lags: usize,
        #[serde(default = "one")]
        timesteps: usize,
    },
    SaLstm {
        timesteps: usize,
        #[serde(default = "one")]
        within_rate: usize,
    },
    UniLstm {
        #[serde(default = "one")]
        timesteps: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridsearchConfig {
    #[serde(default)]
    dataset: Option<PathBuf>,
    #[serde(default)]
    dgp: Option<DgpConfig>,
    h_m: usize,
    model: GridModel,
    grid: HyperGrid,
    #[serde(default)]
    split: Split,
    #[serde(default = "one")]
    repeats: usize,
    #[serde(default)]
    seed: RandomSeed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedWindow {
    name: String,
    periods: Vec<Period>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    forecasts: BTreeMap<String, PathBuf>,
    #[serde(default)]
    benchmark: Option<String>,
    #[serde(default)]
    dm: DmOptions,
    /// Extra windows besides `all`; e.g. downturn periods.
    #[serde(default)]
    windows: Vec<NamedWindow>,
    /// Shorthand for the `exclude-downturns` and `downturns` windows.
    #[serde(default)]
    downturns: Vec<Period>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportConfig {
    benchmark: PathBuf,
    model: PathBuf,
    #[serde(default)]
    h_m: Option<usize>,
}

/// File-name friendly model name: `AR(1)` becomes `ar-1`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> anyhow::Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(p)
    }
}

fn load_dataset(base: &Path, p: &Path) -> anyhow::Result<MixedFrequencyDataset> {
    let path = resolve(base, p);
    io::load_dataset(&path).with_context(|| format!("loading dataset {}", path.display()))
}

/// Runs a parsed command line; returns the written file names.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let (sub, common) = cli.command.parts();
    if common.jobs == Some(0) {
        return Err(schema("jobs", "must be >= 1"));
    }
    let cfg = load_config(sub, common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| dispatch(sub, &cfg))
}

fn dispatch(sub: &str, cfg: &LoadedConfig) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut out = Outputs {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    let base = cfg.base_dir.as_path();
    let v = cfg.value.clone();
    match sub {
        "simulate" => simulate(typed(v)?, &mut out)?,
        "align" => align(typed(v)?, base, &mut out)?,
        "fit" => fit(typed(v)?, base, &mut out)?,
        "forecast" => forecast(typed(v)?, base, &mut out)?,
        "gridsearch" => gridsearch(typed(v)?, base, &mut out)?,
        "montecarlo" => montecarlo(typed(v)?, &mut out)?,
        "evaluate" => evaluate_cmd(typed(v)?, base, &mut out)?,
        "report" => report(typed(v)?, base, &mut out)?,
        other => return Err(schema("subcommand", format!("unknown `{other}`"))),
    }
    let seeds = seed_paths(sub)
        .iter()
        .filter_map(|p| get_path(&cfg.value, p).map(|s| (p.to_string(), s.clone())))
        .collect();
    let mut files = out.files.clone();
    files.sort();
    let manifest = RunManifest {
        subcommand: sub,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: &cfg.hash,
        config: &cfg.value,
        seeds,
        outputs: files.clone(),
    };
    io::write_json(&cfg.output_dir.join("run-manifest.json"), &manifest)?;
    files.push("run-manifest.json".into());
    Ok(files)
}

fn simulate(c: SimulateConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ds = match (c.dgp, c.pseudo_thai) {
        (Some(d), None) => {
            within("dgp", d.validate())?;
            gen_dgp(&d)?
        }
        (None, Some(p)) => within("pseudo_thai", pseudo_thai(&p))?,
        _ => return Err(schema("dgp", "give exactly one of `dgp` and `pseudo_thai`")),
    };
    let dir = out.dir.clone();
    io::write_dataset(&ds, &dir)?;
    let mut ratios: Vec<usize> = ds.ratios();
    ratios.push(1);
    ratios.sort_unstable();
    ratios.dedup();
    for m in ratios {
        out.files.push(format!("ratio_{m}.csv"));
    }
    out.files.push("manifest.json".into());
    Ok(())
}

fn align(c: AlignConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let ds = load_dataset(base, &c.dataset)?;
    let ds = match &c.covariates {
        Some(ids) => ds.select(&ids.iter().map(String::as_str).collect::<Vec<_>>())?,
        None => ds,
    };
    let spec = mixed_lag_spec(
        &ds,
        reference_ratio(&ds),
        c.h_m,
        c.lags,
        c.low_lags.unwrap_or(c.lags),
        c.ar_lags,
    )?;
    let ad = frequency_align(&ds, &spec)?;
    io::write_aligned(&out.path("aligned.csv")?, &ad)?;
    Ok(())
}

fn fit(c: FitConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let ds = load_dataset(base, &c.dataset)?;
    let train = match c.train_periods {
        Some(n) if n == 0 || n > ds.n() => {
            return Err(schema("train_periods", "must lie in 1..=T"));
        }
        Some(n) => ds.head(n),
        None => ds,
    };
    let fitted = c.model.build().fit(&train, c.h_m, c.seed)?;
    let doc = serde_json::json!({
        "model": c.model,
        "h_m": c.h_m,
        "train_periods": train.n(),
        "parameters": fitted.parameters(),
    });
    io::write_json(&out.path("fit.json")?, &doc)?;
    Ok(())
}

fn average_runs(runs: &[Vec<ForecastRecord>]) -> Vec<ForecastRecord> {
    let mut acc: BTreeMap<usize, (ForecastRecord, f64, usize)> = BTreeMap::new();
    for r in runs.iter().flatten() {
        let e = acc.entry(r.origin).or_insert((*r, 0.0, 0));
        e.1 += r.forecast;
        e.2 += 1;
    }
    acc.into_values()
        .map(|(mut r, s, n)| {
            r.forecast = s / n as f64;
            r
        })
        .collect()
}

fn forecast(c: ForecastConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let ds = load_dataset(base, &c.dataset)?;
    match (c.rolling, c.recursive) {
        (Some(r), None) => rolling(&ds, r, out),
        (None, Some(r)) => recursive(&ds, &r, out),
        _ => Err(schema("rolling", "give exactly one of `rolling` and `recursive`")),
    }
}

fn rolling(ds: &MixedFrequencyDataset, c: RollingConfig, out: &mut Outputs) -> Result<(), CliError> {
    if c.horizons.is_empty() || c.horizons.contains(&0) {
        return Err(schema("rolling.horizons", "need horizons >= 1"));
    }
    if c.models.is_empty() {
        return Err(schema("rolling.models", "must not be empty"));
    }
    if c.estimations == 0 {
        return Err(schema("rolling.estimations", "must be >= 1"));
    }
    let mut names: Vec<String> = c.models.iter().map(|m| slug(&m.name)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(schema("rolling.models", "model names must be distinct"));
    }
    for m in &c.models {
        let model = m.model.build();
        let runs = if model.is_stochastic() { c.estimations } else { 1 };
        let mut all = Vec::new();
        for &h_m in &c.horizons {
            let fits: Vec<Vec<ForecastRecord>> = (0..runs)
                .map(|e| {
                    let seed = c.seed.derive(&format!("{}/{h_m}", m.name), e as u64);
                    rolling_forecast(model.as_ref(), ds, h_m, c.split, seed)
                })
                .collect::<crate::Result<_>>()
                .with_context(|| format!("model `{}` at h_m = {h_m}", m.name))?;
            all.extend(average_runs(&fits));
        }
        let name = format!("forecasts/{}.csv", slug(&m.name));
        io::write_forecasts(&out.path(&name)?, &all)?;
    }
    Ok(())
}

fn recursive(ds: &MixedFrequencyDataset, c: &RecursiveConfig, out: &mut Outputs) -> Result<(), CliError> {
    let res = within("recursive", run_recursive(ds, c))?;
    for (name, recs) in &res.forecasts {
        let mut recs = recs.clone();
        recs.sort_by_key(|r| (r.h_m, r.target));
        io::write_forecasts(&out.path(&format!("forecasts/{}.csv", slug(name)))?, &recs)?;
    }
    let tables: Vec<(&str, &crate::evaluation::EvaluationReport)> = res
        .windows
        .iter()
        .map(|w| (w.window.as_str(), &w.report))
        .collect();
    io::write_evaluation(&out.path("evaluation.csv")?, &tables)?;
    io::write_json(&out.path("evaluation.json")?, &res.windows)?;
    io::write_json(
        &out.path("configurations.json")?,
        &serde_json::json!({ "traces": res.traces, "failures": res.failures }),
    )?;
    Ok(())
}

struct CliGridEvaluator {
    ds: MixedFrequencyDataset,
    h_m: usize,
    model: GridModel,
    split: Split,
}

impl CliGridEvaluator {
    fn forecaster(&self, choice: &HyperChoice) -> Box<dyn Forecaster> {
        let settings = LstmSettings::new(choice.clone());
        match self.model {
            GridModel::FaLstm { lags, timesteps } => Box::new(FaLstmForecaster {
                covariates: None,
                lags: choice.monthly_lags.unwrap_or(lags),
                low_lags: choice.quarterly_lags,
                ar_lags: None,
                timesteps: choice.timesteps.unwrap_or(timesteps),
                settings,
            }),
            GridModel::SaLstm {
                timesteps,
                within_rate,
            } => Box::new(SaLstmForecaster {
                covariates: None,
                timesteps: choice.timesteps.unwrap_or(timesteps),
                within_rate,
                settings,
            }),
            GridModel::UniLstm { timesteps } => Box::new(UniLstmForecaster {
                timesteps: choice.timesteps.unwrap_or(timesteps),
                settings,
            }),
        }
    }
}

impl GridEvaluator for CliGridEvaluator {
    fn evaluate(&self, choice: &HyperChoice, seed: RandomSeed) -> crate::Result<f64> {
        let recs = rolling_forecast(self.forecaster(choice).as_ref(), &self.ds, self.h_m, self.split, seed)?;
        crate::evaluation::rmsfe(&recs)
    }

    fn parameter_count(&self, choice: &HyperChoice) -> usize {
        let features = match self.model {
            GridModel::FaLstm { lags, .. } => {
                let hi = choice.monthly_lags.unwrap_or(lags);
                let lo = choice.quarterly_lags.unwrap_or(hi);
                self.ds
                    .covariates()
                    .iter()
                    .map(|c| if c.ratio() == 1 { lo } else { hi })
                    .sum()
            }
            GridModel::SaLstm { .. } => self.ds.covariates().len(),
            GridModel::UniLstm { .. } => 1,
        };
        parameter_count(features, &choice.cells, false)
    }
}

fn gridsearch(c: GridsearchConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let ds = match (&c.dataset, &c.dgp) {
        (Some(p), None) => load_dataset(base, p)?,
        (None, Some(d)) => {
            let d = d.for_horizon(c.h_m).with_seed(c.seed.derive("data", 0));
            within("dgp", d.validate())?;
            gen_dgp(&d)?
        }
        _ => return Err(schema("dataset", "give exactly one of `dataset` and `dgp`")),
    };
    if c.h_m == 0 {
        return Err(schema("h_m", "must be >= 1"));
    }
    let eval = CliGridEvaluator {
        ds,
        h_m: c.h_m,
        model: c.model,
        split: c.split,
    };
    let res = grid_search(&c.grid, &eval, c.repeats, c.seed.derive("grid", 0))?;
    io::write_grid_scores(&out.path("grid_scores.csv")?, &res)?;
    io::write_json(
        &out.path("choice.json")?,
        &serde_json::json!({ "best": res.best, "best_score": res.best_score }),
    )?;
    Ok(())
}

fn montecarlo(exp: McExperiment, out: &mut Outputs) -> Result<(), CliError> {
    exp.validate()?;
    let res = run_monte_carlo(&exp)?;
    io::write_mc_results(&out.path("mc_results.csv")?, &res)?;
    io::write_json(&out.path("mc_results.json")?, &res)?;
    Ok(())
}

fn evaluate_cmd(c: EvaluateConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    if c.forecasts.is_empty() {
        return Err(schema("forecasts", "must not be empty"));
    }
    if let Some(b) = &c.benchmark {
        if !c.forecasts.contains_key(b) {
            return Err(schema("benchmark", format!("`{b}` is not among the forecasts")));
        }
    }
    let mut models = Vec::new();
    for (name, p) in &c.forecasts {
        let path = resolve(base, p);
        let recs = io::read_forecasts(&path).with_context(|| format!("reading {}", path.display()))?;
        models.push((name.clone(), recs));
    }
    let mut targets: Vec<usize> = models
        .iter()
        .flat_map(|(_, r)| r.iter().map(|r| r.target))
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let mut windows: Vec<(String, Vec<usize>)> = if c.downturns.is_empty() {
        vec![("all".into(), targets.clone())]
    } else {
        evaluation_windows(&targets, &c.downturns)
    };
    for w in &c.windows {
        let members = targets
            .iter()
            .copied()
            .filter(|t| w.periods.iter().any(|p| p.contains(*t)))
            .collect();
        windows.push((w.name.clone(), members));
    }
    let mut reports = Vec::new();
    for (name, members) in &windows {
        let subset: Vec<(String, Vec<ForecastRecord>)> = models
            .iter()
            .map(|(n, recs)| {
                let keep = recs.iter().filter(|r| members.contains(&r.target)).copied().collect();
                (n.clone(), keep)
            })
            .collect();
        let report = evaluate(&subset, c.benchmark.as_deref(), c.dm)?;
        reports.push((name.clone(), report));
    }
    let tables: Vec<(&str, &crate::evaluation::EvaluationReport)> =
        reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    io::write_evaluation(&out.path("evaluation.csv")?, &tables)?;
    let doc: BTreeMap<&str, &crate::evaluation::EvaluationReport> = tables.iter().copied().collect();
    io::write_json(&out.path("evaluation.json")?, &doc)?;
    Ok(())
}

fn report(c: ReportConfig, base: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let bench = io::read_forecasts(&resolve(base, &c.benchmark))?;
    let model = io::read_forecasts(&resolve(base, &c.model))?;
    let mut horizons: Vec<usize> = bench.iter().map(|r| r.h_m).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let h_m = match (c.h_m, horizons.as_slice()) {
        (Some(h), _) => h,
        (None, [h]) => *h,
        _ => return Err(schema("h_m", "forecast files hold several horizons; choose one")),
    };
    let by_target = |recs: &[ForecastRecord]| -> BTreeMap<usize, f64> {
        recs.iter()
            .filter(|r| r.h_m == h_m)
            .map(|r| (r.target, r.error()))
            .collect()
    };
    let (b, m) = (by_target(&bench), by_target(&model));
    let common: Vec<usize> = b.keys().filter(|t| m.contains_key(t)).copied().collect();
    if common.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no common targets at h_m = {h_m}"
        )));
    }
    let eb: Vec<f64> = common.iter().map(|t| b[t]).collect();
    let em: Vec<f64> = common.iter().map(|t| m[t]).collect();
    io::write_cumsfe(&out.path("cumsfe.csv")?, &common, &cumsfe(&eb, &em)?)?;
    Ok(())
}

/// Entry point used by the binary: parses arguments, runs, prints a JSON
/// error line on failure and returns the exit code.
pub fn main_exit() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {f}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
