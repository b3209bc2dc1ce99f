//! Forecast accuracy metrics and pairwise comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// One forecast with its realized value. Indices are low-frequency periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin: usize,
    pub target: usize,
    pub h_m: usize,
    pub forecast: f64,
    pub actual: f64,
}

impl ForecastRecord {
    pub fn error(&self) -> f64 {
        self.actual - self.forecast
    }
}

pub fn errors(records: &[ForecastRecord]) -> Vec<f64> {
    records.iter().map(ForecastRecord::error).collect()
}

pub fn msfe_of(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("no forecast errors"));
    }
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

pub fn rmsfe_of(errors: &[f64]) -> Result<f64> {
    msfe_of(errors).map(f64::sqrt)
}

/// Root mean squared forecast error.
pub fn rmsfe(records: &[ForecastRecord]) -> Result<f64> {
    rmsfe_of(&errors(records))
}

/// Population variance (n denominator).
pub fn population_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("variance of an empty sample"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

/// MSFE divided by the population variance of `y_eval`.
pub fn relative_mse(records: &[ForecastRecord], y_eval: &[f64]) -> Result<f64> {
    let var = population_variance(y_eval)?;
    if var <= 0.0 {
        return Err(Error::domain("evaluation actuals have zero variance"));
    }
    Ok(msfe_of(&errors(records))? / var)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmOptions {
    /// Harvey–Leybourne–Newbold small-sample correction with Student-t
    /// reference distribution.
    pub hln: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_differential: f64,
    pub long_run_variance: f64,
    /// The HAC estimate was non-positive and the lag-0 variance was used.
    pub variance_fallback: bool,
}

/// Diebold–Mariano test of equal squared-error loss.
///
/// `d_t = e_a,t² − e_b,t²`; the long-run variance uses a rectangular kernel
/// truncated at lag `h − 1`. A negative statistic means `a` is more accurate.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], h: usize, opts: DmOptions) -> Result<DmResult> {
    let d: Vec<f64> = errors_a
        .iter()
        .zip(errors_b)
        .map(|(a, b)| a * a - b * b)
        .collect();
    dm_test_differential(&d, errors_a.len(), errors_b.len(), h, opts)
}

/// Diebold–Mariano test on a precomputed loss differential.
pub fn dm_test_loss(d: &[f64], h: usize, opts: DmOptions) -> Result<DmResult> {
    dm_test_differential(d, d.len(), d.len(), h, opts)
}

fn dm_test_differential(
    d: &[f64],
    len_a: usize,
    len_b: usize,
    h: usize,
    opts: DmOptions,
) -> Result<DmResult> {
    if len_a != len_b {
        return Err(Error::shape(format!(
            "error series differ in length: {len_a} vs {len_b}"
        )));
    }
    let n = d.len();
    if n < 5 {
        return Err(Error::domain(format!("DM test needs n >= 5, got {n}")));
    }
    if h == 0 {
        return Err(Error::domain("horizon must be >= 1"));
    }
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateComparison);
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma = |k: usize| -> f64 {
        (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / nf
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return Err(Error::DegenerateComparison);
    }
    let mut v = g0 + 2.0 * (1..h.min(n)).map(gamma).sum::<f64>();
    let mut fallback = false;
    if v <= 0.0 {
        log::warn!("DM long-run variance {v} is not positive; using lag-0 variance");
        v = g0;
        fallback = true;
    }
    let mut stat = mean / (v / nf).sqrt();
    let p_value = if opts.hln {
        let hf = h as f64;
        stat *= ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        2.0 * t.sf(stat.abs())
    } else {
        erfc(stat.abs() / std::f64::consts::SQRT_2)
    };
    Ok(DmResult {
        statistic: stat,
        p_value: p_value.min(1.0),
        mean_differential: mean,
        long_run_variance: v,
        variance_fallback: fallback,
    })
}

/// Running sum of `e_bench² − e_model²`; positive means the model is ahead.
pub fn cumsfe(errors_bench: &[f64], errors_model: &[f64]) -> Result<Vec<f64>> {
    if errors_bench.len() != errors_model.len() {
        return Err(Error::shape("error series differ in length"));
    }
    let mut acc = 0.0;
    Ok(errors_bench
        .iter()
        .zip(errors_model)
        .map(|(b, m)| {
            acc += b * b - m * m;
            acc
        })
        .collect())
}

/// Where one quarter of an annual figure comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuarterSource {
    Actual,
    Forecast { h_m: usize },
}

/// Quarter sources for an annual growth figure produced at monthly horizon
/// `h_m` before the end of the year: earlier quarters are published
/// actuals, later ones come from successively longer forecasts.
pub fn annual_schedule(h_m: usize) -> Result<[QuarterSource; 4]> {
    use QuarterSource::{Actual, Forecast};
    let f = |h_m| Forecast { h_m };
    Ok(match h_m {
        12 => [f(3), f(6), f(9), f(12)],
        9 => [Actual, f(3), f(6), f(9)],
        6 => [Actual, Actual, f(3), f(6)],
        3 => [Actual, Actual, Actual, f(3)],
        1 => [Actual, Actual, Actual, f(1)],
        _ => {
            return Err(Error::domain(format!(
                "no annual schedule for h_m = {h_m}"
            )))
        }
    })
}

/// Annual growth (%) from quarterly growth rates.
///
/// `known` are the year's published quarterly growth rates (leading
/// quarters), `forecasts` the remaining ones; together exactly four.
/// Levels are compounded from the last quarter of `base_levels` (the prior
/// year's four quarterly levels).
pub fn annualize(known: &[f64], forecasts: &[f64], base_levels: &[f64]) -> Result<f64> {
    if known.len() + forecasts.len() != 4 {
        return Err(Error::shape(format!(
            "need 4 quarters, got {} actual + {} forecast",
            known.len(),
            forecasts.len()
        )));
    }
    if base_levels.len() != 4 {
        return Err(Error::shape("base year needs 4 quarterly levels"));
    }
    if base_levels.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::domain("base levels must be positive"));
    }
    let mut level = base_levels[3];
    let mut total = 0.0;
    for g in known.iter().chain(forecasts) {
        level *= 1.0 + g / 100.0;
        total += level;
    }
    Ok(100.0 * (total / base_levels.iter().sum::<f64>() - 1.0))
}

/// Accuracy of one model at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub h_m: usize,
    pub n: usize,
    pub rmsfe: f64,
    /// RMSFE divided by each other model's RMSFE over the same targets.
    pub relative_rmsfe: BTreeMap<String, f64>,
    pub relative_mse: Option<f64>,
    pub dm_vs_benchmark: Option<DmResult>,
    pub cumsfe_vs_benchmark: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub benchmark: Option<String>,
    pub entries: Vec<ModelEvaluation>,
}

fn low_freq_horizon(r: &ForecastRecord) -> usize {
    r.target.saturating_sub(r.origin).max(1)
}

/// Builds the report for several models. Records are grouped by `h_m`;
/// comparisons use only targets present for both models.
pub fn evaluate(
    models: &[(String, Vec<ForecastRecord>)],
    benchmark: Option<&str>,
    opts: DmOptions,
) -> Result<EvaluationReport> {
    if let Some(b) = benchmark {
        if !models.iter().any(|(m, _)| m == b) {
            return Err(Error::domain(format!("benchmark `{b}` not among models")));
        }
    }
    let mut horizons: Vec<usize> = models
        .iter()
        .flat_map(|(_, r)| r.iter().map(|r| r.h_m))
        .collect();
    horizons.sort_unstable();
    horizons.dedup();

    let by_target = |recs: &[ForecastRecord], h_m: usize| -> BTreeMap<usize, ForecastRecord> {
        recs.iter()
            .filter(|r| r.h_m == h_m)
            .map(|r| (r.target, *r))
            .collect()
    };

    let mut entries = Vec::new();
    for &h_m in &horizons {
        for (name, recs) in models {
            let own = by_target(recs, h_m);
            if own.is_empty() {
                continue;
            }
            let own_recs: Vec<ForecastRecord> = own.values().copied().collect();
            let rm = rmsfe(&own_recs)?;
            let actuals: Vec<f64> = own_recs.iter().map(|r| r.actual).collect();
            let relative_mse = relative_mse(&own_recs, &actuals).ok();

            let mut relative_rmsfe = BTreeMap::new();
            let mut dm = None;
            let mut cum = Vec::new();
            for (other, orecs) in models {
                let theirs = by_target(orecs, h_m);
                let (mine, bench): (Vec<f64>, Vec<f64>) = own
                    .iter()
                    .filter_map(|(t, r)| theirs.get(t).map(|o| (r.error(), o.error())))
                    .unzip();
                if mine.is_empty() {
                    continue;
                }
                let denom = rmsfe_of(&bench)?;
                if denom > 0.0 {
                    relative_rmsfe.insert(other.clone(), rmsfe_of(&mine)? / denom);
                }
                if Some(other.as_str()) == benchmark {
                    cum = cumsfe(&bench, &mine)?;
                    if other != name {
                        let h = low_freq_horizon(&own_recs[0]);
                        dm = dm_test(&mine, &bench, h, opts).ok();
                    }
                }
            }
            entries.push(ModelEvaluation {
                model: name.clone(),
                h_m,
                n: own_recs.len(),
                rmsfe: rm,
                relative_rmsfe,
                relative_mse,
                dm_vs_benchmark: dm,
                cumsfe_vs_benchmark: cum,
            });
        }
    }
    Ok(EvaluationReport {
        benchmark: benchmark.map(str::to_string),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dm_rejects_short_and_unequal() {
        assert!(dm_test(&[1.0; 4], &[2.0; 4], 1, DmOptions::default()).is_err());
        assert!(matches!(
            dm_test(&[1.0; 6], &[2.0; 5], 1, DmOptions::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn schedule_matches_publication_order() {
        assert_eq!(
            annual_schedule(6).unwrap(),
            [
                QuarterSource::Actual,
                QuarterSource::Actual,
                QuarterSource::Forecast { h_m: 3 },
                QuarterSource::Forecast { h_m: 6 }
            ]
        );
        assert!(annual_schedule(2).is_err());
    }
}
