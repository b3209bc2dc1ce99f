//! Time-series containers and deterministic transforms.
//!
//! Period indices are 1-based and counted in each series' own frequency.
//! A covariate with mismatch ratio `m` carries `m` observations per
//! low-frequency period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single series at its own sampling frequency.
///
/// Missing observations are carried in an explicit mask; the value slot of a
/// masked observation is kept at `0.0` and never read through [`Series::get`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    id: String,
    values: Vec<f64>,
    observed: Vec<bool>,
    ratio: usize,
}

impl Series {
    pub fn new(id: impl Into<String>, values: Vec<f64>, ratio: usize) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::with_mask(id, values, observed, ratio)
    }

    /// Builds a series from values and an observation mask (`true` = observed).
    pub fn with_mask(
        id: impl Into<String>,
        mut values: Vec<f64>,
        observed: Vec<bool>,
        ratio: usize,
    ) -> Result<Self> {
        let id = id.into();
        if ratio == 0 {
            return Err(Error::domain(format!("series `{id}`: ratio must be >= 1")));
        }
        if observed.len() != values.len() {
            return Err(Error::shape(format!(
                "series `{id}`: mask length {} != value length {}",
                observed.len(),
                values.len()
            )));
        }
        for (i, (v, &obs)) in values.iter_mut().zip(&observed).enumerate() {
            if obs && !v.is_finite() {
                return Err(Error::domain(format!(
                    "series `{id}`: non-finite observed value at t={}",
                    i + 1
                )));
            }
            if !obs {
                *v = 0.0;
            }
        }
        Ok(Series {
            id,
            values,
            observed,
            ratio,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw value storage; masked entries read as `0.0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Value at 1-based period `t`, `None` when out of range or masked.
    #[inline]
    pub fn get(&self, t: usize) -> Option<f64> {
        if t == 0 || t > self.values.len() || !self.observed[t - 1] {
            None
        } else {
            Some(self.values[t - 1])
        }
    }

    /// First `len` observations.
    pub fn truncated(&self, len: usize) -> Series {
        let len = len.min(self.values.len());
        Series {
            id: self.id.clone(),
            values: self.values[..len].to_vec(),
            observed: self.observed[..len].to_vec(),
            ratio: self.ratio,
        }
    }

    /// Replaces the leading run of missing values with zeros.
    pub fn impute_leading_zeros(&self) -> Series {
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(out.observed.iter_mut()) {
            if *o {
                break;
            }
            *v = 0.0;
            *o = true;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Series {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

/// One low-frequency target plus covariates at their own frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedFrequencyDataset {
    target: Series,
    covariates: Vec<Series>,
}

/// A covariate whose length is not `m_k · n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthViolation {
    pub series: String,
    pub ratio: usize,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<LengthViolation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl MixedFrequencyDataset {
    pub fn new(target: Series, covariates: Vec<Series>) -> Result<Self> {
        if target.ratio() != 1 {
            return Err(Error::domain(format!(
                "target `{}` must have ratio 1, got {}",
                target.id(),
                target.ratio()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        seen.insert(target.id().to_string());
        for c in &covariates {
            if !seen.insert(c.id().to_string()) {
                return Err(Error::domain(format!("duplicate series id `{}`", c.id())));
            }
        }
        Ok(MixedFrequencyDataset { target, covariates })
    }

    pub fn target(&self) -> &Series {
        &self.target
    }

    pub fn covariates(&self) -> &[Series] {
        &self.covariates
    }

    pub fn covariate(&self, id: &str) -> Option<&Series> {
        self.covariates.iter().find(|c| c.id() == id)
    }

    /// Number of low-frequency periods.
    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn ratios(&self) -> Vec<usize> {
        self.covariates.iter().map(Series::ratio).collect()
    }

    /// Lists every covariate whose length differs from `m_k · n`.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n();
        let violations = self
            .covariates
            .iter()
            .filter(|c| c.len() != c.ratio() * n)
            .map(|c| LengthViolation {
                series: c.id().to_string(),
                ratio: c.ratio(),
                expected: c.ratio() * n,
                actual: c.len(),
            })
            .collect();
        ValidationReport { violations }
    }

    /// Keeps only the named covariates, in the given order.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let covariates = ids
            .iter()
            .map(|id| {
                self.covariate(id)
                    .cloned()
                    .ok_or_else(|| Error::domain(format!("unknown covariate `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.target.clone(), covariates)
    }

    /// First `n` low-frequency periods, covariates cut to `m_k · n`.
    pub fn head(&self, n: usize) -> Self {
        MixedFrequencyDataset {
            target: self.target.truncated(n),
            covariates: self
                .covariates
                .iter()
                .map(|c| c.truncated(c.ratio() * n))
                .collect(),
        }
    }

    /// Information set at a forecast origin: target through `origin`,
    /// covariate `k` through index `covariate_len[k]`.
    pub fn information_set(&self, origin: usize, covariate_len: &[usize]) -> Result<Self> {
        if covariate_len.len() != self.covariates.len() {
            return Err(Error::shape("one covariate length per covariate required"));
        }
        Ok(MixedFrequencyDataset {
            target: self.target.truncated(origin),
            covariates: self
                .covariates
                .iter()
                .zip(covariate_len)
                .map(|(c, &l)| c.truncated(l))
                .collect(),
        })
    }

    pub fn with_covariates(&self, covariates: Vec<Series>) -> Result<Self> {
        Self::new(self.target.clone(), covariates)
    }

    pub fn impute_leading_zeros(&self) -> Self {
        MixedFrequencyDataset {
            target: self.target.impute_leading_zeros(),
            covariates: self
                .covariates
                .iter()
                .map(Series::impute_leading_zeros)
                .collect(),
        }
    }
}

/// Percentage growth `100 · (x[t+1] − x[t]) / x[t]`.
pub fn growth_rate(levels: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, v)) = levels.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::domain(format!(
            "growth rate needs positive levels; got {v} at position {}",
            i + 1
        )));
    }
    Ok(levels
        .windows(2)
        .map(|w| 100.0 * (w[1] - w[0]) / w[0])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(n: usize, covs: &[(usize, usize)]) -> MixedFrequencyDataset {
        let y = Series::new("y", vec![0.0; n], 1).unwrap();
        let xs = covs
            .iter()
            .enumerate()
            .map(|(k, &(m, len))| Series::new(format!("x{}", k + 1), vec![1.0; len], m).unwrap())
            .collect();
        MixedFrequencyDataset::new(y, xs).unwrap()
    }

    #[test]
    fn growth_rate_examples() {
        assert_eq!(growth_rate(&[100.0, 110.0]).unwrap(), vec![10.0]);
        assert_eq!(growth_rate(&[100.0, 100.0, 100.0]).unwrap(), vec![0.0, 0.0]);
        let g = growth_rate(&[50.0, 55.0, 44.0]).unwrap();
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[1] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn growth_rate_rejects_nonpositive() {
        assert!(matches!(growth_rate(&[1.0, 0.0, 2.0]), Err(Error::Domain(_))));
        assert!(matches!(growth_rate(&[-1.0, 2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_examples() {
        assert!(ds(4, &[(3, 12)]).validate().is_empty());
        let r = ds(4, &[(3, 11)]).validate();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].series, "x1");
        let r = ds(4, &[(3, 12), (6, 23)]).validate();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].series, "x2");
        assert_eq!(r.violations[0].expected, 24);
    }

    #[test]
    fn masked_values_are_hidden() {
        let s = Series::with_mask("a", vec![f64::NAN, 2.0, 3.0], vec![false, true, true], 1)
            .unwrap();
        assert_eq!(s.get(1), None);
        assert_eq!(s.get(2), Some(2.0));
        assert_eq!(s.get(4), None);
        assert_eq!(s.get(0), None);
        let z = s.impute_leading_zeros();
        assert_eq!(z.get(1), Some(0.0));
    }

    #[test]
    fn rejects_non_finite_and_bad_ratio() {
        assert!(Series::new("a", vec![1.0, f64::INFINITY], 1).is_err());
        assert!(Series::new("a", vec![1.0], 0).is_err());
        let y = Series::new("y", vec![1.0], 3).unwrap();
        assert!(MixedFrequencyDataset::new(y, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn growth_rate_scale_invariant(
            levels in prop::collection::vec(0.1f64..1e3, 2..30),
            c in 0.01f64..100.0,
        ) {
            let a = growth_rate(&levels).unwrap();
            let scaled: Vec<f64> = levels.iter().map(|v| v * c).collect();
            let b = growth_rate(&scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
