//! Forecasting models behind one interface, and the rolling-origin
//! evaluation scheme without re-estimation.
//!
//! A [`Forecaster`] is fitted once on a training sample. Predictions are made
//! from an *information set*: a copy of the dataset truncated to what is
//! known at the forecast origin, so a model cannot read later observations.

use serde::{Deserialize, Serialize};

use crate::alignment::{
    design_sequence, design_to_tensor, feature_row, frequency_align, sample_align,
    sample_sequence, AlignSpec, HorizonSpec, LagSpec, SampleSpec, TensorBatch,
};
use crate::error::{Error, Result};
use crate::evaluation::ForecastRecord;
use crate::lstm::{self, LstmNetwork, TrainConfig};
use crate::midas::{
    ar1_fit, midas_fit, umidas_fit, Ar1Fit, LinearPredictor, MidasFit, MidasOptions, UMidasFit,
    Weighting,
};
use crate::rng::RandomSeed;
use crate::selection::HyperChoice;
use crate::series::MixedFrequencyDataset;

/// A model specification that can be estimated.
pub trait Forecaster: Send + Sync {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>>;

    /// Whether repeated fits with different seeds give different models.
    fn is_stochastic(&self) -> bool {
        false
    }
}

pub trait FittedForecaster: Send + Sync {
    /// Forecast of the target at low-frequency period `target` from `info`.
    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64>;

    /// Estimated parameters as JSON, for writing fitted models to disk.
    fn parameters(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Highest covariate ratio, the frequency in which `h_m` is counted.
pub fn reference_ratio(ds: &MixedFrequencyDataset) -> usize {
    ds.ratios().into_iter().max().unwrap_or(1)
}

/// Low-frequency horizon `h = ceil(h_m / m_ref)`.
pub fn low_frequency_horizon(h_m: usize, m_ref: usize) -> usize {
    h_m.div_ceil(m_ref.max(1))
}

/// Training/evaluation split of a sample of `T` periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    /// Share of periods used for estimation.
    pub train_fraction: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train_fraction: 0.6,
        }
    }
}

impl Split {
    /// `(T1, T2)` with `T2 = round((1 − train_fraction)·T)`.
    pub fn sizes(&self, t: usize) -> Result<(usize, usize)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        let t2 = ((1.0 - self.train_fraction) * t as f64).round() as usize;
        if t2 == 0 || t2 >= t {
            return Err(Error::domain(format!(
                "split {} of {t} periods leaves an empty sample",
                self.train_fraction
            )));
        }
        Ok((t - t2, t2))
    }
}

/// Covariate lengths known when forecasting `target` at horizon `h_m`:
/// series `k` is observed through index `m_k·target − ceil(h_m·m_k/m_ref)`.
pub fn information_lengths(ds: &MixedFrequencyDataset, h_m: usize, target: usize) -> Vec<usize> {
    let m_ref = reference_ratio(ds);
    let hs = HorizonSpec::from_reference(h_m, m_ref, &ds.ratios());
    ds.covariates()
        .iter()
        .zip(&hs.covariate)
        .map(|(x, &h)| (x.ratio() * target).saturating_sub(h).min(x.len()))
        .collect()
}

/// Information set for forecasting `target` from `origin`.
pub fn information_set(
    ds: &MixedFrequencyDataset,
    h_m: usize,
    origin: usize,
    target: usize,
) -> Result<MixedFrequencyDataset> {
    ds.information_set(origin, &information_lengths(ds, h_m, target))
}

/// Fits once on the first `T1` periods, then forecasts `y_{T1+Ω+h}` from
/// origin `T1 + Ω` for `Ω = 0..=T2−h` with fixed parameters. Origins whose
/// prediction fails are skipped with a warning.
pub fn rolling_forecast(
    model: &dyn Forecaster,
    ds: &MixedFrequencyDataset,
    h_m: usize,
    split: Split,
    seed: RandomSeed,
) -> Result<Vec<ForecastRecord>> {
    let (t1, t2) = split.sizes(ds.n())?;
    let fitted = model.fit(&ds.head(t1), h_m, seed)?;
    forecast_window(fitted.as_ref(), ds, h_m, t1, t2)
}

/// Forecasts from origins `t1..=t1+t2−h` with an already fitted model.
pub fn forecast_window(
    fitted: &dyn FittedForecaster,
    ds: &MixedFrequencyDataset,
    h_m: usize,
    t1: usize,
    t2: usize,
) -> Result<Vec<ForecastRecord>> {
    let h = low_frequency_horizon(h_m, reference_ratio(ds));
    if t2 < h {
        return Err(Error::domain(format!(
            "evaluation sample of {t2} periods is shorter than horizon {h}"
        )));
    }
    let mut out = Vec::with_capacity(t2 + 1 - h);
    for omega in 0..=(t2 - h) {
        let origin = t1 + omega;
        let target = origin + h;
        let Some(actual) = ds.target().get(target) else {
            log::warn!("no actual for target {target}; origin skipped");
            continue;
        };
        let info = information_set(ds, h_m, origin, target)?;
        match fitted.predict(&info, target) {
            Ok(forecast) => out.push(ForecastRecord {
                origin,
                target,
                h_m,
                forecast,
                actual,
            }),
            Err(e) => log::warn!("origin {origin} skipped: {e}"),
        }
    }
    if out.is_empty() {
        return Err(Error::alignment("no feasible forecast origin"));
    }
    Ok(out)
}

fn covariate_ids(ds: &MixedFrequencyDataset, ids: &Option<Vec<String>>) -> Vec<String> {
    match ids {
        Some(v) => v.clone(),
        None => ds.covariates().iter().map(|c| c.id().to_string()).collect(),
    }
}

fn select(ds: &MixedFrequencyDataset, ids: &[String]) -> Result<MixedFrequencyDataset> {
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    ds.select(&refs)
}

/// Alignment spec with `lags` high-frequency lags per covariate, counted
/// from the horizon-adjusted end index, plus optional AR lags.
pub fn lag_spec(
    ds: &MixedFrequencyDataset,
    m_ref: usize,
    h_m: usize,
    lags: usize,
    ar_lags: Option<usize>,
) -> Result<AlignSpec> {
    if lags == 0 && !ds.covariates().is_empty() {
        return Err(Error::domain("lag count must be >= 1"));
    }
    AlignSpec::new(
        vec![LagSpec::first(lags); ds.covariates().len()],
        HorizonSpec::from_reference(h_m, m_ref, &ds.ratios()),
        ar_lags.map(LagSpec::first),
    )
}

/// Like [`lag_spec`], but covariates sampled at the target frequency
/// (ratio 1) get `low_lags` lags instead of `lags`.
pub fn mixed_lag_spec(
    ds: &MixedFrequencyDataset,
    m_ref: usize,
    h_m: usize,
    lags: usize,
    low_lags: usize,
    ar_lags: Option<usize>,
) -> Result<AlignSpec> {
    if lags == 0 || low_lags == 0 {
        return Err(Error::domain("lag count must be >= 1"));
    }
    AlignSpec::new(
        ds.covariates()
            .iter()
            .map(|c| LagSpec::first(if c.ratio() == 1 { low_lags } else { lags }))
            .collect(),
        HorizonSpec::from_reference(h_m, m_ref, &ds.ratios()),
        ar_lags.map(LagSpec::first),
    )
}

struct LinearFitted<P> {
    ids: Vec<String>,
    spec: AlignSpec,
    model: P,
}

impl<P: LinearPredictor + Serialize + Send + Sync> FittedForecaster for LinearFitted<P> {
    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({ "covariates": self.ids, "spec": self.spec, "fit": self.model })
    }

    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64> {
        let sub = select(info, &self.ids)?;
        let row = feature_row(&sub, &self.spec, target)
            .ok_or_else(|| Error::alignment(format!("features for target {target} unavailable")))?;
        self.model.predict_row(&row)
    }
}

/// Restricted MIDAS with exponential Almon weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MidasForecaster {
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub lags: usize,
    pub weighting: Weighting,
    #[serde(default)]
    pub ar_lags: Option<usize>,
    #[serde(default)]
    pub options: MidasOptions,
}

impl Forecaster for MidasForecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let m_ref = reference_ratio(train);
        let ids = covariate_ids(train, &self.covariates);
        let sub = select(train, &ids)?;
        let spec = lag_spec(&sub, m_ref, h_m, self.lags, self.ar_lags)?;
        let ad = frequency_align(&sub, &spec)?;
        let fit: MidasFit = midas_fit(&ad, &vec![self.weighting; ids.len()], seed, &self.options)?;
        Ok(Box::new(LinearFitted {
            ids,
            spec,
            model: fit,
        }))
    }
}

/// Unrestricted MIDAS (OLS on every lag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UMidasForecaster {
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub lags: usize,
    #[serde(default)]
    pub ar_lags: Option<usize>,
}

impl Forecaster for UMidasForecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        _seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let m_ref = reference_ratio(train);
        let ids = covariate_ids(train, &self.covariates);
        let sub = select(train, &ids)?;
        let spec = lag_spec(&sub, m_ref, h_m, self.lags, self.ar_lags)?;
        let fit: UMidasFit = umidas_fit(&frequency_align(&sub, &spec)?)?;
        Ok(Box::new(LinearFitted {
            ids,
            spec,
            model: fit,
        }))
    }
}

/// AR(1) on the target: `y_t` regressed on `y_{t−h}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ar1Forecaster;

struct Ar1Fitted(Ar1Fit);

impl Forecaster for Ar1Forecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        _seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let h = low_frequency_horizon(h_m, reference_ratio(train));
        let y: Vec<f64> = (1..=train.n())
            .map(|t| train.target().get(t))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::domain("AR(1) needs a fully observed target"))?;
        Ok(Box::new(Ar1Fitted(ar1_fit(&y, h)?)))
    }
}

impl FittedForecaster for Ar1Fitted {
    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({ "fit": self.0 })
    }

    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64> {
        let lag = target
            .checked_sub(self.0.h)
            .and_then(|t| info.target().get(t))
            .ok_or_else(|| Error::alignment(format!("y lagged {} unavailable", self.0.h)))?;
        self.0.predict_row(&[lag])
    }
}

/// LSTM training settings shared by the LSTM forecasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmSettings {
    pub hyper: HyperChoice,
    /// Hold out this trailing share of training sequences for early stopping.
    #[serde(default)]
    pub validation_fraction: Option<f64>,
    #[serde(default)]
    pub patience: Option<usize>,
    /// Overrides `hyper.epochs` as the epoch cap when early stopping.
    #[serde(default)]
    pub epochs_max: Option<usize>,
    #[serde(default)]
    pub peepholes: bool,
}

impl LstmSettings {
    pub fn new(hyper: HyperChoice) -> Self {
        LstmSettings {
            hyper,
            validation_fraction: None,
            patience: None,
            epochs_max: None,
            peepholes: false,
        }
    }

    pub fn train_config(&self, n_train: usize, seed: RandomSeed) -> TrainConfig {
        TrainConfig {
            cells: self.hyper.cells.clone(),
            epochs_max: self.epochs_max.unwrap_or(self.hyper.epochs),
            batch_size: self.hyper.batch.resolve(n_train),
            dropout: self.hyper.dropout,
            patience: self.patience,
            peepholes: self.peepholes,
            seed,
            ..TrainConfig::default()
        }
    }

    fn train(&self, data: &TensorBatch, seed: RandomSeed) -> Result<LstmNetwork> {
        match self.validation_fraction {
            Some(f) if f > 0.0 => {
                let n_val = ((data.batch as f64) * f).round().max(1.0) as usize;
                if data.batch < n_val + 2 {
                    return Err(Error::shape(format!(
                        "{} sequences cannot hold out {n_val} for validation",
                        data.batch
                    )));
                }
                let (tr, va) = data.split_at(data.batch - n_val);
                lstm::train(&tr, &self.train_config(tr.batch, seed), Some(&va))
            }
            _ => lstm::train(data, &self.train_config(data.batch, seed), None),
        }
    }
}

/// LSTM on frequency-aligned (U-MIDAS style) inputs: `lags` lags of every
/// covariate per row, `timesteps` consecutive rows per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaLstmForecaster {
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub lags: usize,
    /// Lags for covariates at the target frequency; defaults to `lags`.
    #[serde(default)]
    pub low_lags: Option<usize>,
    #[serde(default)]
    pub ar_lags: Option<usize>,
    pub timesteps: usize,
    pub settings: LstmSettings,
}

struct FaFitted {
    ids: Vec<String>,
    spec: AlignSpec,
    timesteps: usize,
    net: LstmNetwork,
}

impl Forecaster for FaLstmForecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let m_ref = reference_ratio(train);
        let ids = covariate_ids(train, &self.covariates);
        let sub = select(train, &ids)?;
        let low = self.low_lags.unwrap_or(self.lags);
        let spec = mixed_lag_spec(&sub, m_ref, h_m, self.lags, low, self.ar_lags)?;
        let tensor = design_to_tensor(&frequency_align(&sub, &spec)?, self.timesteps)?;
        let net = self.settings.train(&tensor, seed)?;
        Ok(Box::new(FaFitted {
            ids,
            spec,
            timesteps: self.timesteps,
            net,
        }))
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

impl FittedForecaster for FaFitted {
    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({
            "covariates": self.ids,
            "spec": self.spec,
            "timesteps": self.timesteps,
            "network": self.net,
        })
    }

    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64> {
        let sub = select(info, &self.ids)?;
        let seq = design_sequence(&sub, &self.spec, target, self.timesteps)
            .ok_or_else(|| Error::alignment(format!("sequence for target {target} unavailable")))?;
        self.net.predict_sequence(&seq, self.timesteps)
    }
}

/// LSTM on sampling-aligned inputs (single frequency mismatch only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaLstmForecaster {
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    pub timesteps: usize,
    #[serde(default = "one")]
    pub within_rate: usize,
    pub settings: LstmSettings,
}

fn one() -> usize {
    1
}

struct SaFitted {
    ids: Vec<String>,
    spec: SampleSpec,
    net: LstmNetwork,
}

impl Forecaster for SaLstmForecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let spec = SampleSpec {
            timesteps: self.timesteps,
            within_rate: self.within_rate,
            h_m,
        };
        let ids = covariate_ids(train, &self.covariates);
        let tensor = sample_align(&select(train, &ids)?, &spec)?;
        let net = self.settings.train(&tensor, seed)?;
        Ok(Box::new(SaFitted { ids, spec, net }))
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

impl FittedForecaster for SaFitted {
    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({ "covariates": self.ids, "spec": self.spec, "network": self.net })
    }

    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64> {
        let seq = sample_sequence(&select(info, &self.ids)?, &self.spec, target)
            .ok_or_else(|| Error::alignment(format!("sequence for target {target} unavailable")))?;
        self.net.predict_sequence(&seq, self.spec.timesteps)
    }
}

/// Univariate LSTM on the target's own past: a sequence of the
/// `timesteps` most recent values known `h` periods ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniLstmForecaster {
    pub timesteps: usize,
    pub settings: LstmSettings,
}

impl Forecaster for UniLstmForecaster {
    fn fit(
        &self,
        train: &MixedFrequencyDataset,
        h_m: usize,
        seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        let m_ref = reference_ratio(train);
        let sub = train.select(&[])?;
        let spec = AlignSpec::new(
            vec![],
            HorizonSpec {
                covariate: vec![],
                target: low_frequency_horizon(h_m, m_ref),
            },
            Some(LagSpec::first(1)),
        )?;
        let tensor = design_to_tensor(&frequency_align(&sub, &spec)?, self.timesteps)?;
        let net = self.settings.train(&tensor, seed)?;
        Ok(Box::new(FaFitted {
            ids: vec![],
            spec,
            timesteps: self.timesteps,
            net,
        }))
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}
