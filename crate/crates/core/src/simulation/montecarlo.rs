use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{gen_dgp, DgpConfig, OracleForecaster, XProcess};
use crate::error::{Error, Result};
use crate::evaluation::{dm_test_loss, rmsfe, DmOptions, ForecastRecord};
use crate::forecast::{
    low_frequency_horizon, rolling_forecast, FaLstmForecaster, Forecaster, LstmSettings,
    MidasForecaster, SaLstmForecaster, Split, UMidasForecaster,
};
use crate::midas::{MidasOptions, Weighting};
use crate::rng::RandomSeed;
use crate::selection::HyperChoice;
use crate::series::MixedFrequencyDataset;

/// One roster member of the Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Midas,
    UMidas,
    SaLstm {
        timesteps: usize,
        #[serde(default = "one")]
        within_rate: usize,
    },
    FaLstm {
        timesteps: usize,
        lags: usize,
    },
    Oracle,
}

fn one() -> usize {
    1
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Midas => "MIDAS".into(),
            EstimatorSpec::UMidas => "U-MIDAS".into(),
            EstimatorSpec::SaLstm { timesteps, .. } => format!("SA-LSTM[{timesteps}]"),
            EstimatorSpec::FaLstm { timesteps, lags } => {
                format!("FA-LSTM[{timesteps},0:{}]", lags.saturating_sub(1))
            }
            EstimatorSpec::Oracle => "ORACLE".into(),
        }
    }

    /// The five LSTM variants and two MIDAS benchmarks of the study.
    pub fn default_roster() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::Midas,
            EstimatorSpec::UMidas,
            EstimatorSpec::SaLstm {
                timesteps: 6,
                within_rate: 1,
            },
            EstimatorSpec::SaLstm {
                timesteps: 12,
                within_rate: 1,
            },
            EstimatorSpec::FaLstm {
                timesteps: 4,
                lags: 3,
            },
            EstimatorSpec::FaLstm {
                timesteps: 2,
                lags: 6,
            },
            EstimatorSpec::FaLstm {
                timesteps: 1,
                lags: 12,
            },
        ]
    }
}

/// Tuned LSTM hyperparameters for one estimator, sample size and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperEntry {
    pub estimator: String,
    pub t: usize,
    pub h_m: usize,
    pub choice: HyperChoice,
}

#[derive(Deserialize)]
struct HyperTableFile {
    iid_normal: Vec<HyperEntry>,
    ar1: Vec<HyperEntry>,
}

/// Bundled hyperparameter table for the five LSTM variants, from a grid
/// search over epochs {25, 50}, dropout {0, 0.4}, batch {1, ⌈n/10⌉, ⌈n/2⌉}
/// and cells on 20 tuning replications.
pub fn default_hyper_table(x: XProcess) -> Vec<HyperEntry> {
    let file: HyperTableFile = serde_json::from_str(include_str!("hyper_table.json"))
        .expect("bundled hyperparameter table is valid");
    match x {
        XProcess::IidNormal => file.iid_normal,
        XProcess::Ar1 { .. } => file.ar1,
    }
}

/// Search space of the MIDAS specification search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidasSearch {
    pub lags: Vec<usize>,
    /// Number of covariates per candidate model.
    pub subset_size: usize,
    pub weightings: Vec<Weighting>,
    pub tuning_replications: usize,
}

impl Default for MidasSearch {
    fn default() -> Self {
        MidasSearch {
            lags: (2..=12).collect(),
            subset_size: 2,
            weightings: vec![Weighting::Normalized, Weighting::NonNormalized],
            tuning_replications: 20,
        }
    }
}

/// Specification chosen by [`midas_spec_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidasSpecChoice {
    pub h_m: usize,
    pub covariates: Vec<String>,
    pub lags: usize,
    pub weighting: Weighting,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McExperiment {
    pub dgp: DgpConfig,
    pub horizons: Vec<usize>,
    pub roster: Vec<EstimatorSpec>,
    pub replications: usize,
    pub estimations: usize,
    pub split: Split,
    pub midas_search: MidasSearch,
    pub midas_options: MidasOptions,
    /// `None` selects the bundled table for the DGP's covariate process.
    pub hyper: Option<Vec<HyperEntry>>,
    pub seed: RandomSeed,
}

impl Default for McExperiment {
    fn default() -> Self {
        McExperiment {
            dgp: DgpConfig::default(),
            horizons: vec![1, 2, 3, 6, 9, 12],
            roster: EstimatorSpec::default_roster(),
            replications: 50,
            estimations: 2,
            split: Split::default(),
            midas_search: MidasSearch::default(),
            midas_options: MidasOptions::default(),
            hyper: None,
            seed: RandomSeed(0),
        }
    }
}

impl McExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(Error::config("roster", "must not be empty"));
        }
        self.validate_run()
    }

    /// Checks everything except the roster.
    fn validate_run(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::config("horizons", "need at least one horizon >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if self.estimations == 0 {
            return Err(Error::config("estimations", "must be >= 1"));
        }
        let (_, t2) = self.split.sizes(self.dgp.t)?;
        for &h_m in &self.horizons {
            if t2 < low_frequency_horizon(h_m, self.dgp.m) + 1 {
                return Err(Error::config(
                    "split",
                    format!("evaluation sample {t2} too short for h_m = {h_m}"),
                ));
            }
        }
        Ok(())
    }

    /// Dataset of replication `r` at horizon `h_m`.
    pub fn dataset(&self, h_m: usize, r: usize) -> Result<MixedFrequencyDataset> {
        gen_dgp(
            &self
                .dgp
                .for_horizon(h_m)
                .with_seed(self.seed.derive("replication", r as u64)),
        )
    }

    fn tuning_dataset(&self, h_m: usize, r: usize) -> Result<MixedFrequencyDataset> {
        gen_dgp(
            &self
                .dgp
                .for_horizon(h_m)
                .with_seed(self.seed.derive("tuning", r as u64)),
        )
    }

    fn hyper_for(&self, name: &str, h_m: usize) -> Result<HyperChoice> {
        let table = match &self.hyper {
            Some(t) => t.clone(),
            None => default_hyper_table(self.dgp.x_process),
        };
        let exact = table
            .iter()
            .find(|e| e.estimator == name && e.h_m == h_m && e.t == self.dgp.t);
        // Fall back to the nearest tabulated sample size.
        let entry = exact.or_else(|| {
            table
                .iter()
                .filter(|e| e.estimator == name && e.h_m == h_m)
                .min_by_key(|e| e.t.abs_diff(self.dgp.t))
        });
        entry.map(|e| e.choice.clone()).ok_or_else(|| {
            Error::config("hyper", format!("no hyperparameters for {name} at h_m = {h_m}"))
        })
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Chooses the MIDAS lag count, covariate subset and weighting with the
/// lowest mean out-of-sample MSE over the tuning replications (ties: fewer
/// lags, then enumeration order).
pub fn midas_spec_search(exp: &McExperiment, h_m: usize) -> Result<MidasSpecChoice> {
    let s = &exp.midas_search;
    if s.lags.is_empty() || s.weightings.is_empty() || s.tuning_replications == 0 {
        return Err(Error::config("midas_search", "empty search space"));
    }
    let k = exp.dgp.k;
    if s.subset_size == 0 || s.subset_size > k {
        return Err(Error::config("midas_search.subset_size", "must lie in 1..=K"));
    }
    let data: Vec<MixedFrequencyDataset> = (0..s.tuning_replications)
        .map(|r| exp.tuning_dataset(h_m, r))
        .collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    for &lags in &s.lags {
        for subset in combinations(k, s.subset_size) {
            for &w in &s.weightings {
                candidates.push((lags, subset.clone(), w));
            }
        }
    }
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|(lags, subset, w)| {
            let model = MidasForecaster {
                covariates: Some(subset.iter().map(|i| format!("x{}", i + 1)).collect()),
                lags: *lags,
                weighting: *w,
                ar_lags: None,
                options: exp.midas_options.clone(),
            };
            let mut total = 0.0;
            let mut ok = 0;
            for (r, ds) in data.iter().enumerate() {
                let seed = exp.seed.derive("tuning-fit", r as u64);
                if let Ok(recs) = rolling_forecast(&model, ds, h_m, exp.split, seed) {
                    total += rmsfe(&recs).map(|v| v * v).unwrap_or(f64::NAN);
                    ok += 1;
                }
            }
            (ok > 0 && total.is_finite()).then(|| total / ok as f64)
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, sc) in scores.iter().enumerate() {
        if let Some(v) = sc {
            if best.is_none_or(|(b, _)| *v < b) {
                best = Some((*v, i));
            }
        }
    }
    let (mse, i) = best.ok_or_else(|| Error::Selection("every MIDAS specification failed".into()))?;
    let (lags, subset, weighting) = candidates[i].clone();
    Ok(MidasSpecChoice {
        h_m,
        covariates: subset.iter().map(|i| format!("x{}", i + 1)).collect(),
        lags,
        weighting,
        mean_mse: mse,
    })
}

/// A named estimator with one model per horizon.
#[derive(Clone)]
pub struct McEntry {
    pub name: String,
    pub per_horizon: BTreeMap<usize, Arc<dyn Forecaster>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub estimator: String,
    pub h_m: usize,
    pub t: usize,
    pub mean_rmsfe: f64,
    pub sd: f64,
    pub n_ok: usize,
    pub n_fail: usize,
    pub dm_statistic: Option<f64>,
    pub dm_vs_midas_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResults {
    pub rows: Vec<McRow>,
    pub midas_specs: Vec<MidasSpecChoice>,
    /// How forecast errors enter the DM test.
    pub dm_pooling: String,
}

impl McResults {
    pub fn row(&self, estimator: &str, h_m: usize) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.h_m == h_m)
    }
}

/// Builds the roster (running the MIDAS specification search where needed)
/// and runs the experiment.
pub fn run_monte_carlo(exp: &McExperiment) -> Result<McResults> {
    exp.validate()?;
    let needs_midas = exp
        .roster
        .iter()
        .any(|e| matches!(e, EstimatorSpec::Midas | EstimatorSpec::UMidas));
    let mut specs = Vec::new();
    if needs_midas {
        for &h_m in &exp.horizons {
            let s = midas_spec_search(exp, h_m)?;
            log::info!(
                "h_m = {h_m}: MIDAS spec {:?}, {} lags, {:?} (tuning MSE {:.4})",
                s.covariates,
                s.lags,
                s.weighting,
                s.mean_mse
            );
            specs.push(s);
        }
    }
    let mut entries = Vec::new();
    for est in &exp.roster {
        let name = est.name();
        let mut per_horizon: BTreeMap<usize, Arc<dyn Forecaster>> = BTreeMap::new();
        for (i, &h_m) in exp.horizons.iter().enumerate() {
            let f: Arc<dyn Forecaster> = match est {
                EstimatorSpec::Midas => Arc::new(MidasForecaster {
                    covariates: Some(specs[i].covariates.clone()),
                    lags: specs[i].lags,
                    weighting: specs[i].weighting,
                    ar_lags: None,
                    options: exp.midas_options.clone(),
                }),
                EstimatorSpec::UMidas => Arc::new(UMidasForecaster {
                    covariates: Some(specs[i].covariates.clone()),
                    lags: specs[i].lags,
                    ar_lags: None,
                }),
                EstimatorSpec::SaLstm {
                    timesteps,
                    within_rate,
                } => Arc::new(SaLstmForecaster {
                    covariates: None,
                    timesteps: *timesteps,
                    within_rate: *within_rate,
                    settings: LstmSettings::new(exp.hyper_for(&name, h_m)?),
                }),
                EstimatorSpec::FaLstm { timesteps, lags } => Arc::new(FaLstmForecaster {
                    covariates: None,
                    lags: *lags,
                    low_lags: None,
                    ar_lags: None,
                    timesteps: *timesteps,
                    settings: LstmSettings::new(exp.hyper_for(&name, h_m)?),
                }),
                EstimatorSpec::Oracle => Arc::new(OracleForecaster {
                    dgp: exp.dgp.clone(),
                }),
            };
            per_horizon.insert(h_m, f);
        }
        entries.push(McEntry { name, per_horizon });
    }
    let mut results = run_monte_carlo_with(exp, &entries)?;
    results.midas_specs = specs;
    Ok(results)
}

type RunOutcome = Vec<Result<Vec<ForecastRecord>>>;

/// Runs a prepared roster. Stochastic estimators are fitted
/// `exp.estimations` times per replication with distinct seeds; fit seeds
/// depend on the estimator name, so roster order does not matter.
pub fn run_monte_carlo_with(exp: &McExperiment, entries: &[McEntry]) -> Result<McResults> {
    exp.validate_run()?;
    if entries.is_empty() {
        return Err(Error::config("roster", "must not be empty"));
    }
    // outcomes[r][h][e] = one result per estimation
    let outcomes: Vec<Vec<Vec<RunOutcome>>> = (0..exp.replications)
        .into_par_iter()
        .map(|r| {
            exp.horizons
                .iter()
                .map(|&h_m| {
                    let ds = exp.dataset(h_m, r)?;
                    Ok(entries
                        .iter()
                        .map(|entry| {
                            let Some(model) = entry.per_horizon.get(&h_m) else {
                                return vec![Err(Error::config(
                                    "roster",
                                    format!("{} has no model for h_m = {h_m}", entry.name),
                                ))];
                            };
                            let n_est = if model.is_stochastic() { exp.estimations } else { 1 };
                            (0..n_est)
                                .map(|e| {
                                    let seed = exp
                                        .seed
                                        .derive(&format!("fit/{}/{h_m}", entry.name), r as u64)
                                        .derive("estimation", e as u64);
                                    rolling_forecast(model.as_ref(), &ds, h_m, exp.split, seed)
                                })
                                .collect()
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let midas_idx = entries.iter().position(|e| e.name == "MIDAS");
    let mut rows = Vec::new();
    for (hi, &h_m) in exp.horizons.iter().enumerate() {
        let h = low_frequency_horizon(h_m, exp.dgp.m);
        // Per replication: mean RMSFE over estimations and mean squared
        // error per target, or None if any estimation failed.
        let summarize = |ei: usize, r: usize| -> Option<(f64, BTreeMap<usize, f64>)> {
            let runs = &outcomes[r][hi][ei];
            let mut rm = 0.0;
            let mut sq: BTreeMap<usize, f64> = BTreeMap::new();
            for run in runs {
                let recs = run.as_ref().ok()?;
                rm += rmsfe(recs).ok()?;
                for rec in recs {
                    *sq.entry(rec.target).or_default() += rec.error().powi(2) / runs.len() as f64;
                }
            }
            Some((rm / runs.len() as f64, sq))
        };
        for (ei, entry) in entries.iter().enumerate() {
            let per_rep: Vec<Option<(f64, BTreeMap<usize, f64>)>> =
                (0..exp.replications).map(|r| summarize(ei, r)).collect();
            for (r, p) in per_rep.iter().enumerate() {
                if p.is_none() {
                    if let Some(Err(e)) = outcomes[r][hi][ei].iter().find(|o| o.is_err()) {
                        log::warn!("{} failed in replication {r} at h_m = {h_m}: {e}", entry.name);
                    }
                }
            }
            let ok: Vec<f64> = per_rep.iter().flatten().map(|(v, _)| *v).collect();
            let n_ok = ok.len();
            let n_fail = exp.replications - n_ok;
            let (mean, sd) = if n_ok == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = ok.iter().sum::<f64>() / n_ok as f64;
                let sd = if n_ok > 1 {
                    (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_ok - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (mean, sd)
            };
            let mut dm = None;
            if let Some(mi) = midas_idx.filter(|&mi| mi != ei) {
                // Per-target loss differential averaged over replications
                // where both estimators succeeded.
                let mut sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
                for r in 0..exp.replications {
                    if let (Some((_, a)), Some((_, b))) = (&per_rep[r], summarize(mi, r)) {
                        for (t, ea) in a {
                            if let Some(eb) = b.get(t) {
                                let s = sum.entry(*t).or_default();
                                s.0 += ea - eb;
                                s.1 += 1;
                            }
                        }
                    }
                }
                let d: Vec<f64> = sum.values().map(|(s, n)| s / *n as f64).collect();
                dm = dm_test_loss(&d, h, DmOptions::default()).ok();
            }
            rows.push(McRow {
                estimator: entry.name.clone(),
                h_m,
                t: exp.dgp.t,
                mean_rmsfe: mean,
                sd,
                n_ok,
                n_fail,
                dm_statistic: dm.map(|d| d.statistic),
                dm_vs_midas_p: dm.map(|d| d.p_value),
            });
        }
    }
    rows.sort_by(|a, b| a.h_m.cmp(&b.h_m).then_with(|| a.estimator.cmp(&b.estimator)));
    Ok(McResults {
        rows,
        midas_specs: Vec::new(),
        dm_pooling: "per-target squared-error differentials averaged across replications".into(),
    })
}
