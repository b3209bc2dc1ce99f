//! Recursive out-of-sample exercise on a quarterly target with monthly and
//! quarterly indicators, plus a synthetic "pseudo-Thai" dataset to run it on.
//!
//! For every model, horizon and evaluation quarter the model is configured
//! from scratch on the information available at the forecast origin: each
//! grid combination first selects variables by LASSO, then is scored on an
//! 80:20 split of the available sample. The winning configuration is
//! re-estimated several times and the forecasts are averaged.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{frequency_align, AlignedDesign, BlockKind};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, rmsfe, DmOptions, EvaluationReport, ForecastRecord};
use crate::forecast::{
    information_set, low_frequency_horizon, mixed_lag_spec, reference_ratio, rolling_forecast,
    Ar1Forecaster, FaLstmForecaster, Forecaster, LstmSettings, SaLstmForecaster, Split,
    UniLstmForecaster,
};
use crate::lstm::parameter_count;
use crate::rng::RandomSeed;
use crate::selection::{
    grid_search, lasso_select, BatchSize, GridEvaluator, HyperChoice, HyperGrid, LassoSelection,
};
use crate::series::{MixedFrequencyDataset, Series};

/// Inclusive range of low-frequency periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: usize,
    pub end: usize,
}

impl Period {
    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }
}

/// Synthetic stand-in for the Thai dataset: a quarterly growth target with
/// seasonality, monthly indicators driven by a common factor, two quarterly
/// indicators, downturn episodes, a tourist-arrivals series that collapses
/// and an indicator that starts late (leading zeros).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoThaiConfig {
    pub quarters: usize,
    pub downturns: Vec<Period>,
    /// Quarter in whose first month tourist arrivals collapse.
    pub tourists_collapse: Option<usize>,
    /// First quarter in which the credit indicator is published.
    pub credit_start: usize,
    pub seed: RandomSeed,
}

impl Default for PseudoThaiConfig {
    fn default() -> Self {
        PseudoThaiConfig {
            quarters: 60,
            downturns: vec![
                Period { start: 25, end: 27 },
                Period { start: 45, end: 48 },
                Period { start: 57, end: 60 },
            ],
            tourists_collapse: Some(58),
            credit_start: 13,
            seed: RandomSeed(2008),
        }
    }
}

pub const MONTHLY_IDS: [&str; 8] = [
    "manufacturing",
    "exports",
    "retail",
    "sentiment",
    "tourists",
    "credit",
    "noise_m1",
    "noise_m2",
];
pub const QUARTERLY_IDS: [&str; 2] = ["investment", "government"];
pub const TARGET_ID: &str = "qgdp_growth";

impl PseudoThaiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quarters < 24 {
            return Err(Error::config("quarters", "must be >= 24"));
        }
        if self.credit_start == 0 || self.credit_start > self.quarters {
            return Err(Error::config("credit_start", "must lie in 1..=quarters"));
        }
        if self
            .downturns
            .iter()
            .any(|p| p.start == 0 || p.start > p.end || p.end > self.quarters)
        {
            return Err(Error::config("downturns", "periods must lie in 1..=quarters"));
        }
        Ok(())
    }

    fn in_downturn(&self, quarter: usize) -> bool {
        self.downturns.iter().any(|p| p.contains(quarter))
    }
}

fn normals(seed: RandomSeed, label: &str, n: usize) -> Vec<f64> {
    let mut rng = seed.derive(label, 0).rng();
    (0..n)
        .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect()
}

/// Draws the pseudo-Thai dataset. Deterministic per seed.
pub fn pseudo_thai(cfg: &PseudoThaiConfig) -> Result<MixedFrequencyDataset> {
    cfg.validate()?;
    let n = cfg.quarters;
    let months = 3 * n;
    let seed = cfg.seed;

    // monthly factor, one extra month so the leading indicator is defined
    let u = normals(seed, "factor", months + 1);
    let mut f = vec![0.0; months + 1];
    for tau in 0..=months {
        let quarter = tau / 3 + 1;
        let shock = if cfg.in_downturn(quarter) { -1.5 } else { 0.0 };
        let prev = if tau == 0 { 0.0 } else { f[tau - 1] };
        f[tau] = 0.6 * prev + u[tau] + shock;
    }
    let g = normals(seed, "quarterly-factor", n);
    let eps = normals(seed, "noise", n);
    let seasonal = [1.5, -1.0, 0.5, -1.0];
    let y: Vec<f64> = (0..n)
        .map(|t| {
            let fbar = (f[3 * t] + f[3 * t + 1] + f[3 * t + 2]) / 3.0;
            1.0 + seasonal[t % 4] + 1.5 * fbar + 0.5 * g[t] + eps[t]
        })
        .collect();

    let monthly = |id: &str, load: f64, noise: f64, lead: usize| -> Vec<f64> {
        let e = normals(seed, id, months);
        (0..months)
            .map(|tau| load * f[tau + lead] + noise * e[tau])
            .collect()
    };
    let mut covariates = Vec::new();
    for id in MONTHLY_IDS {
        let series = match id {
            "manufacturing" => Series::new(id, monthly(id, 1.0, 0.5, 0), 3)?,
            "exports" => Series::new(id, monthly(id, 0.8, 0.8, 0), 3)?,
            "retail" => Series::new(id, monthly(id, 0.5, 1.0, 0), 3)?,
            "sentiment" => Series::new(id, monthly(id, 0.7, 0.7, 1), 3)?,
            "tourists" => {
                let mut v = monthly(id, 0.6, 0.8, 0);
                if let Some(q) = cfg.tourists_collapse.filter(|q| *q >= 1 && *q <= n) {
                    let start = 3 * (q - 1);
                    let e = normals(seed, "tourists-after", months);
                    v[start] = -25.0;
                    for tau in start + 1..months {
                        v[tau] = 0.1 * e[tau];
                    }
                }
                Series::new(id, v, 3)?
            }
            "credit" => {
                let v = monthly(id, 0.4, 0.8, 0);
                let first = 3 * (cfg.credit_start - 1);
                let mask = (0..months).map(|tau| tau >= first).collect();
                Series::with_mask(id, v, mask, 3)?.impute_leading_zeros()
            }
            _ => Series::new(id, monthly(id, 0.0, 1.0, 0), 3)?,
        };
        covariates.push(series);
    }
    let q_noise = normals(seed, "investment", n);
    covariates.push(Series::new(
        "investment",
        g.iter().zip(&q_noise).map(|(a, b)| a + 0.5 * b).collect(),
        1,
    )?);
    covariates.push(Series::new("government", normals(seed, "government", n), 1)?);
    MixedFrequencyDataset::new(Series::new(TARGET_ID, y, 1)?, covariates)
}

/// Models of the recursive exercise with the grid each is configured over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmpiricalModel {
    /// Frequency-aligned LSTM on AR lags plus LASSO-selected indicators;
    /// searches `monthly_lags`, `quarterly_lags` and `timesteps`.
    FaLstm { grid: HyperGrid },
    /// Sampling-aligned LSTM on LASSO-selected monthly indicators.
    SaLstm { grid: HyperGrid },
    /// LSTM on the target's own past, no variable selection.
    UniLstm { grid: HyperGrid },
    Ar1,
}

impl EmpiricalModel {
    pub fn name(&self) -> &'static str {
        match self {
            EmpiricalModel::FaLstm { .. } => "FA-LSTM",
            EmpiricalModel::SaLstm { .. } => "SA-LSTM",
            EmpiricalModel::UniLstm { .. } => "UNI-LSTM",
            EmpiricalModel::Ar1 => "AR(1)",
        }
    }

    fn grid(&self) -> Option<&HyperGrid> {
        match self {
            EmpiricalModel::FaLstm { grid }
            | EmpiricalModel::SaLstm { grid }
            | EmpiricalModel::UniLstm { grid } => Some(grid),
            EmpiricalModel::Ar1 => None,
        }
    }

    /// The full candidate sets: 540, 90 and 96 combinations.
    pub fn paper_roster() -> Vec<EmpiricalModel> {
        let batch = |fr: &[f64]| fr.iter().map(|&f| BatchSize::Fraction(f)).collect();
        let grid = |batch, cells: Vec<Vec<usize>>, timesteps: &[usize], pm: &[usize], pq: &[usize]| {
            HyperGrid {
                epochs: vec![200],
                dropout: vec![0.0],
                batch,
                cells,
                timesteps: timesteps.to_vec(),
                monthly_lags: pm.to_vec(),
                quarterly_lags: pq.to_vec(),
            }
        };
        let thirds = [1.0 / 5.0, 1.0 / 3.0, 1.0 / 2.0];
        vec![
            EmpiricalModel::FaLstm {
                grid: grid(
                    batch(&thirds),
                    vec![vec![128], vec![256], vec![512], vec![128, 128], vec![256, 256]],
                    &[3, 6, 12, 18],
                    &[3, 6, 9],
                    &[1, 2, 3],
                ),
            },
            EmpiricalModel::SaLstm {
                grid: grid(
                    batch(&thirds),
                    vec![vec![32], vec![64], vec![128], vec![32, 32], vec![64, 64], vec![128, 128]],
                    &[3, 6, 12, 18, 24],
                    &[],
                    &[],
                ),
            },
            EmpiricalModel::UniLstm {
                grid: grid(
                    batch(&[1.0 / 5.0, 1.0 / 3.0, 1.0 / 2.0, 1.0]),
                    vec![vec![8], vec![16], vec![32], vec![64]],
                    &[3, 6, 12, 15, 18, 24],
                    &[],
                    &[],
                ),
            },
            EmpiricalModel::Ar1,
        ]
    }

    /// Two combinations per LSTM model; small enough for a laptop run.
    pub fn desk_roster() -> Vec<EmpiricalModel> {
        let grid = |cells: usize, timesteps: &[usize], pm: &[usize], pq: &[usize]| HyperGrid {
            epochs: vec![60],
            dropout: vec![0.0],
            batch: vec![BatchSize::Fraction(1.0 / 3.0)],
            cells: vec![vec![cells]],
            timesteps: timesteps.to_vec(),
            monthly_lags: pm.to_vec(),
            quarterly_lags: pq.to_vec(),
        };
        vec![
            EmpiricalModel::FaLstm {
                grid: grid(16, &[3], &[3], &[1, 2]),
            },
            EmpiricalModel::SaLstm {
                grid: grid(16, &[3, 6], &[], &[]),
            },
            EmpiricalModel::UniLstm {
                grid: grid(8, &[3, 6], &[], &[]),
            },
            EmpiricalModel::Ar1,
        ]
    }
}

/// Adds `series` to every LASSO selection for targets from `from_target` on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedInclusion {
    pub series: String,
    pub from_target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopping {
    pub validation_fraction: f64,
    pub patience: usize,
    pub epochs_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecursiveConfig {
    pub horizons: Vec<usize>,
    /// First and last evaluated target quarter (last defaults to the end).
    pub first_target: usize,
    pub last_target: Option<usize>,
    pub models: Vec<EmpiricalModel>,
    pub benchmark: String,
    pub folds: usize,
    /// Split of the available sample into training and validation parts.
    pub validation_split: Split,
    pub repeats: usize,
    /// Estimations averaged into one forecast (stochastic models).
    pub estimations: usize,
    pub always_include: Vec<ForcedInclusion>,
    pub early_stopping: Option<EarlyStopping>,
    pub downturns: Vec<Period>,
    pub dm: DmOptions,
    pub seed: RandomSeed,
}

impl Default for RecursiveConfig {
    fn default() -> Self {
        RecursiveConfig {
            horizons: vec![1, 2, 3, 6, 9, 12],
            first_target: 45,
            last_target: None,
            models: EmpiricalModel::desk_roster(),
            benchmark: "UNI-LSTM".into(),
            folds: 4,
            validation_split: Split {
                train_fraction: 0.8,
            },
            repeats: 2,
            estimations: 3,
            always_include: vec![ForcedInclusion {
                series: "tourists".into(),
                from_target: 57,
            }],
            early_stopping: Some(EarlyStopping {
                validation_fraction: 0.2,
                patience: 5,
                epochs_max: 60,
            }),
            downturns: PseudoThaiConfig::default().downturns,
            dm: DmOptions::default(),
            seed: RandomSeed(0),
        }
    }
}

impl RecursiveConfig {
    pub fn validate(&self, ds: &MixedFrequencyDataset) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::config("horizons", "need at least one horizon, all >= 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "must not be empty"));
        }
        let mut names: Vec<&str> = self.models.iter().map(EmpiricalModel::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("models", "each model kind may appear once"));
        }
        if !names.contains(&self.benchmark.as_str()) {
            return Err(Error::config("benchmark", "must name a configured model"));
        }
        for m in &self.models {
            let Some(grid) = m.grid() else { continue };
            grid.validate()?;
            if grid.timesteps.is_empty() {
                return Err(Error::config("models.grid.timesteps", "candidate set is empty"));
            }
            if let EmpiricalModel::FaLstm { grid } = m {
                if grid.monthly_lags.is_empty() || grid.quarterly_lags.is_empty() {
                    return Err(Error::config(
                        "models.grid",
                        "FA-LSTM needs monthly_lags and quarterly_lags candidates",
                    ));
                }
            }
        }
        if self.folds == 0 {
            return Err(Error::config("folds", "must be >= 1"));
        }
        if self.repeats == 0 || self.estimations == 0 {
            return Err(Error::config("repeats", "repeats and estimations must be >= 1"));
        }
        for fi in &self.always_include {
            if ds.covariate(&fi.series).is_none() {
                return Err(Error::config(
                    "always_include",
                    format!("unknown series `{}`", fi.series),
                ));
            }
        }
        let last = self.last_target.unwrap_or(ds.n());
        let h_max = self
            .horizons
            .iter()
            .map(|&h| low_frequency_horizon(h, reference_ratio(ds)))
            .max()
            .unwrap_or(1);
        if last > ds.n() || self.first_target > last || self.first_target <= h_max + 8 {
            return Err(Error::config(
                "first_target",
                "evaluation window must fit in the sample and leave an estimation sample",
            ));
        }
        Ok(())
    }

    fn forced(&self, target: usize) -> Vec<String> {
        self.always_include
            .iter()
            .filter(|f| target >= f.from_target)
            .map(|f| f.series.clone())
            .collect()
    }

    fn settings(&self, choice: &HyperChoice) -> LstmSettings {
        let mut s = LstmSettings::new(choice.clone());
        if let Some(es) = self.early_stopping {
            s.validation_fraction = Some(es.validation_fraction);
            s.patience = Some(es.patience);
            s.epochs_max = Some(es.epochs_max);
        }
        s
    }
}

/// What the recursive configuration chose for one forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigTrace {
    pub model: String,
    pub h_m: usize,
    pub target: usize,
    pub choice: Option<HyperChoice>,
    pub selected: Vec<String>,
    pub forced: Vec<String>,
    pub validation_rmsfe: Option<f64>,
    pub estimations_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub model: String,
    pub h_m: usize,
    pub target: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: String,
    pub targets: Vec<usize>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalResults {
    pub forecasts: Vec<(String, Vec<ForecastRecord>)>,
    pub traces: Vec<ConfigTrace>,
    pub failures: Vec<TaskFailure>,
    pub windows: Vec<WindowReport>,
}

/// Evaluation windows: all targets, targets outside the downturns, and
/// targets inside them.
pub fn evaluation_windows(targets: &[usize], downturns: &[Period]) -> Vec<(String, Vec<usize>)> {
    let inside = |t: &usize| downturns.iter().any(|p| p.contains(*t));
    vec![
        ("full".into(), targets.to_vec()),
        (
            "exclude-downturns".into(),
            targets.iter().copied().filter(|t| !inside(t)).collect(),
        ),
        ("downturns".into(), targets.iter().copied().filter(inside).collect()),
    ]
}

/// Covariate ids of the LASSO selection; if nothing survives, the covariate
/// whose column enters the path first.
fn selection_or_first(ad: &AlignedDesign, sel: &LassoSelection) -> Vec<String> {
    if !sel.selected.is_empty() {
        return sel.selected.clone();
    }
    for coefs in &sel.path.coefs {
        for b in &ad.blocks {
            if matches!(b.kind, BlockKind::Covariate(_)) && b.columns().any(|c| coefs[c] != 0.0) {
                return vec![b.series.clone()];
            }
        }
    }
    Vec::new()
}

struct Evaluator<'a> {
    cfg: &'a RecursiveConfig,
    model: &'a EmpiricalModel,
    /// Data through the forecast origin.
    sample: MixedFrequencyDataset,
    h_m: usize,
    forced: Vec<String>,
    /// LASSO selections keyed by (monthly lags, quarterly lags).
    cache: Mutex<HashMap<(usize, usize), Result<Vec<String>>>>,
}

impl Evaluator<'_> {
    fn candidates(&self) -> Vec<String> {
        let m_ref = reference_ratio(&self.sample);
        self.sample
            .covariates()
            .iter()
            .filter(|c| !matches!(self.model, EmpiricalModel::SaLstm { .. }) || c.ratio() == m_ref)
            .map(|c| c.id().to_string())
            .collect()
    }

    fn lag_key(&self, choice: &HyperChoice) -> (usize, usize) {
        match self.model {
            EmpiricalModel::FaLstm { .. } => (
                choice.monthly_lags.unwrap_or(1),
                choice.quarterly_lags.unwrap_or(1),
            ),
            // monthly-only design covering the sequence length
            _ => (choice.timesteps.unwrap_or(1), 1),
        }
    }

    fn select(&self, key: (usize, usize)) -> Result<Vec<String>> {
        if let Some(r) = self.cache.lock().expect("cache lock").get(&key) {
            return r.clone();
        }
        let r = self.run_lasso(key);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, r.clone());
        r
    }

    fn run_lasso(&self, (pm, pq): (usize, usize)) -> Result<Vec<String>> {
        let ids = self.candidates();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let sub = self.sample.select(&refs)?;
        let fa = matches!(self.model, EmpiricalModel::FaLstm { .. });
        let spec = mixed_lag_spec(
            &sub,
            reference_ratio(&self.sample),
            self.h_m,
            pm,
            pq,
            fa.then_some(pq),
        )?;
        let ad = frequency_align(&sub, &spec)?;
        let sel = lasso_select(&ad, self.cfg.folds, &self.forced)?;
        Ok(if fa {
            sel.selected
        } else {
            selection_or_first(&ad, &sel)
        })
    }

    fn forecaster(&self, choice: &HyperChoice) -> Result<(Box<dyn Forecaster>, Vec<String>)> {
        let settings = self.cfg.settings(choice);
        let timesteps = choice.timesteps.unwrap_or(1);
        Ok(match self.model {
            EmpiricalModel::FaLstm { .. } => {
                let (pm, pq) = self.lag_key(choice);
                let ids = self.select((pm, pq))?;
                let f = FaLstmForecaster {
                    covariates: Some(ids.clone()),
                    lags: pm,
                    low_lags: Some(pq),
                    ar_lags: Some(pq),
                    timesteps,
                    settings,
                };
                (Box::new(f), ids)
            }
            EmpiricalModel::SaLstm { .. } => {
                let ids = self.select(self.lag_key(choice))?;
                if ids.is_empty() {
                    return Err(Error::Selection("no monthly indicator selected".into()));
                }
                let f = SaLstmForecaster {
                    covariates: Some(ids.clone()),
                    timesteps,
                    within_rate: 1,
                    settings,
                };
                (Box::new(f), ids)
            }
            EmpiricalModel::UniLstm { .. } => (
                Box::new(UniLstmForecaster {
                    timesteps,
                    settings,
                }),
                Vec::new(),
            ),
            EmpiricalModel::Ar1 => (Box::new(Ar1Forecaster), Vec::new()),
        })
    }

    fn features(&self, choice: &HyperChoice, ids: &[String]) -> usize {
        let (pm, pq) = self.lag_key(choice);
        match self.model {
            EmpiricalModel::FaLstm { .. } => {
                let x: usize = ids
                    .iter()
                    .filter_map(|id| self.sample.covariate(id))
                    .map(|c| if c.ratio() == 1 { pq } else { pm })
                    .sum();
                x + pq
            }
            EmpiricalModel::SaLstm { .. } => ids.len(),
            _ => 1,
        }
    }
}

impl GridEvaluator for Evaluator<'_> {
    fn evaluate(&self, choice: &HyperChoice, seed: RandomSeed) -> Result<f64> {
        let (model, _) = self.forecaster(choice)?;
        let recs = rolling_forecast(
            model.as_ref(),
            &self.sample,
            self.h_m,
            self.cfg.validation_split,
            seed,
        )?;
        rmsfe(&recs)
    }

    fn parameter_count(&self, choice: &HyperChoice) -> usize {
        let ids = match self.model {
            EmpiricalModel::FaLstm { .. } | EmpiricalModel::SaLstm { .. } => {
                self.select(self.lag_key(choice)).unwrap_or_default()
            }
            _ => Vec::new(),
        };
        parameter_count(self.features(choice, &ids), &choice.cells, false)
    }
}

fn forecast_one(
    ds: &MixedFrequencyDataset,
    cfg: &RecursiveConfig,
    model: &EmpiricalModel,
    h_m: usize,
    target: usize,
) -> Result<(ForecastRecord, ConfigTrace)> {
    let name = model.name();
    let h = low_frequency_horizon(h_m, reference_ratio(ds));
    let origin = target - h;
    let actual = ds
        .target()
        .get(target)
        .ok_or_else(|| Error::domain(format!("no actual for target {target}")))?;
    let seed = cfg.seed.derive(&format!("{name}/{h_m}"), target as u64);
    let eval = Evaluator {
        cfg,
        model,
        sample: ds.head(origin),
        h_m,
        forced: cfg.forced(target),
        cache: Mutex::new(HashMap::new()),
    };
    let (choice, validation_rmsfe) = match model.grid() {
        Some(grid) => {
            let res = grid_search(grid, &eval, cfg.repeats, seed.derive("grid", 0))?;
            (Some(res.best), Some(res.best_score))
        }
        None => (None, None),
    };
    let fallback = HyperChoice {
        epochs: 1,
        dropout: 0.0,
        batch: BatchSize::Absolute(1),
        cells: vec![1],
        timesteps: None,
        monthly_lags: None,
        quarterly_lags: None,
    };
    let (forecaster, selected) = eval.forecaster(choice.as_ref().unwrap_or(&fallback))?;
    let info = information_set(ds, h_m, origin, target)?;
    let runs = if forecaster.is_stochastic() {
        cfg.estimations
    } else {
        1
    };
    let mut preds = Vec::with_capacity(runs);
    for e in 0..runs {
        let fitted = forecaster.fit(&eval.sample, h_m, seed.derive("estimation", e as u64));
        match fitted.and_then(|f| f.predict(&info, target)) {
            Ok(p) if p.is_finite() => preds.push(p),
            Ok(p) => log::warn!("{name} h_m={h_m} target={target}: non-finite forecast {p}"),
            Err(err) => log::warn!("{name} h_m={h_m} target={target}: estimation failed: {err}"),
        }
    }
    if preds.is_empty() {
        return Err(Error::Numerical("every estimation failed".into()));
    }
    let forecast = preds.iter().sum::<f64>() / preds.len() as f64;
    let forced = eval.forced.clone();
    Ok((
        ForecastRecord {
            origin,
            target,
            h_m,
            forecast,
            actual,
        },
        ConfigTrace {
            model: name.to_string(),
            h_m,
            target,
            choice,
            selected,
            forced,
            validation_rmsfe,
            estimations_ok: preds.len(),
        },
    ))
}

/// Runs the recursive exercise and evaluates it over the three windows.
pub fn run_recursive(ds: &MixedFrequencyDataset, cfg: &RecursiveConfig) -> Result<EmpiricalResults> {
    cfg.validate(ds)?;
    let last = cfg.last_target.unwrap_or(ds.n());
    let targets: Vec<usize> = (cfg.first_target..=last).collect();
    let tasks: Vec<(usize, usize, usize)> = (0..cfg.models.len())
        .flat_map(|m| {
            let targets = &targets;
            cfg.horizons
                .iter()
                .flat_map(move |&h| targets.iter().map(move |&t| (m, h, t)))
        })
        .collect();
    let outcomes: Vec<Result<(ForecastRecord, ConfigTrace)>> = tasks
        .par_iter()
        .map(|&(m, h_m, t)| forecast_one(ds, cfg, &cfg.models[m], h_m, t))
        .collect();

    let mut by_model: BTreeMap<usize, Vec<ForecastRecord>> = BTreeMap::new();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (&(m, h_m, target), outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok((rec, trace)) => {
                by_model.entry(m).or_default().push(rec);
                traces.push(trace);
            }
            Err(e) => {
                log::warn!("{} h_m={h_m} target={target} failed: {e}", cfg.models[m].name());
                failures.push(TaskFailure {
                    model: cfg.models[m].name().to_string(),
                    h_m,
                    target,
                    error: e.to_string(),
                });
            }
        }
    }
    let forecasts: Vec<(String, Vec<ForecastRecord>)> = by_model
        .into_iter()
        .map(|(m, recs)| (cfg.models[m].name().to_string(), recs))
        .collect();
    if forecasts.is_empty() {
        return Err(Error::Numerical("no forecast could be produced".into()));
    }
    let bench = forecasts
        .iter()
        .any(|(n, _)| *n == cfg.benchmark)
        .then_some(cfg.benchmark.as_str());

    let mut windows = Vec::new();
    for (window, members) in evaluation_windows(&targets, &cfg.downturns) {
        let subset: Vec<(String, Vec<ForecastRecord>)> = forecasts
            .iter()
            .map(|(n, recs)| {
                let keep = recs
                    .iter()
                    .filter(|r| members.contains(&r.target))
                    .copied()
                    .collect();
                (n.clone(), keep)
            })
            .collect();
        let report = evaluate(&subset, bench, cfg.dm)?;
        windows.push(WindowReport {
            window,
            targets: members,
            report,
        });
    }
    Ok(EmpiricalResults {
        forecasts,
        traces,
        failures,
        windows,
    })
}
