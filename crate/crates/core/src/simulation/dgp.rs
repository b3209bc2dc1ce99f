use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{low_frequency_horizon, FittedForecaster, Forecaster};
use crate::midas::{almon_weights, AlmonTheta, Weighting};
use crate::rng::RandomSeed;
use crate::series::{MixedFrequencyDataset, Series};

/// Law of motion of the high-frequency covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XProcess {
    IidNormal,
    /// `x_τ = ρ x_{τ−1} + u_τ`, `u ~ N(0, 1)`, started from the stationary law.
    Ar1 { rho: f64 },
}

/// Restricted-MIDAS data generating process:
///
/// `y_t = α + Σ_k β_k Σ_{j=0}^{J} w_kj · x_k[m·t − lead − j] + ε_t`
///
/// with normalized exponential Almon weights over `J + 1` positions.
/// `lead` shifts the regressors back so that `y_{t+h}` depends on
/// information dated `t` (use [`DgpConfig::for_horizon`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub t: usize,
    pub m: usize,
    pub k: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<AlmonTheta>,
    pub x_process: XProcess,
    pub noise_sd: f64,
    pub lead: usize,
    pub seed: RandomSeed,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            t: 50,
            m: 3,
            k: 3,
            j: 11,
            alpha: 0.0,
            beta: vec![0.6; 3],
            theta: [-0.025, -0.1, -0.5]
                .iter()
                .map(|&t2| AlmonTheta::new(0.7, t2))
                .collect(),
            x_process: XProcess::IidNormal,
            noise_sd: 1.0,
            lead: 0,
            seed: RandomSeed(0),
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 20 {
            return Err(Error::config("t", "must be >= 20"));
        }
        if self.m == 0 || self.k == 0 {
            return Err(Error::config("m", "m and k must be >= 1"));
        }
        if self.j >= self.m * self.t {
            return Err(Error::config("j", "must be < m·T"));
        }
        if self.beta.len() != self.k {
            return Err(Error::config("beta", format!("needs {} entries", self.k)));
        }
        if self.theta.len() != self.k {
            return Err(Error::config("theta", format!("needs {} entries", self.k)));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::config("noise_sd", "must be >= 0"));
        }
        if let XProcess::Ar1 { rho } = self.x_process {
            if !(rho.abs() < 1.0) {
                return Err(Error::config("x_process.rho", "must satisfy |rho| < 1"));
            }
        }
        Ok(())
    }

    /// The DGP for a forecast horizon of `h_m` high-frequency periods:
    /// regressors are lagged by `h = ceil(h_m/m)` low-frequency periods.
    pub fn for_horizon(&self, h_m: usize) -> Self {
        DgpConfig {
            lead: self.m * low_frequency_horizon(h_m, self.m),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: RandomSeed) -> Self {
        DgpConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn weights(&self) -> Result<Vec<Vec<f64>>> {
        self.theta
            .iter()
            .map(|&th| almon_weights(th, self.j + 1, Weighting::Normalized))
            .collect()
    }

    /// `E[y_t | x]` evaluated from the covariates in `ds`.
    pub fn conditional_mean(&self, ds: &MixedFrequencyDataset, t: usize) -> Result<f64> {
        let w = self.weights()?;
        let mut mean = self.alpha;
        for (k, x) in ds.covariates().iter().enumerate().take(self.k) {
            let end = (self.m * t)
                .checked_sub(self.lead)
                .ok_or_else(|| Error::alignment("regressor index before sample start"))?;
            let mut s = 0.0;
            for (j, wj) in w[k].iter().enumerate() {
                let v = end
                    .checked_sub(j)
                    .and_then(|i| x.get(i))
                    .ok_or_else(|| Error::alignment(format!("x_{} unavailable at lag {j}", k + 1)))?;
                s += wj * v;
            }
            mean += self.beta[k] * s;
        }
        Ok(mean)
    }
}

/// Draws one dataset. Covariates use pre-sample values for the earliest
/// targets; these are generated but not returned. Covariate `k` and the
/// target noise come from separate seed streams.
pub fn gen_dgp(cfg: &DgpConfig) -> Result<MixedFrequencyDataset> {
    cfg.validate()?;
    let burn = cfg.lead + cfg.j;
    let len = cfg.m * cfg.t + burn;
    let mut xs = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let mut rng = cfg.seed.derive("dgp-x", k as u64).rng();
        let mut x = Vec::with_capacity(len);
        match cfg.x_process {
            XProcess::IidNormal => {
                x.extend((0..len).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)));
            }
            XProcess::Ar1 { rho } => {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut prev = z / (1.0 - rho * rho).sqrt();
                x.push(prev);
                for _ in 1..len {
                    let u: f64 = StandardNormal.sample(&mut rng);
                    prev = rho * prev + u;
                    x.push(prev);
                }
            }
        }
        xs.push(x);
    }
    let w = cfg.weights()?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = cfg.seed.derive("dgp-noise", 0).rng();
    let y: Vec<f64> = (1..=cfg.t)
        .map(|t| {
            // Full-series index of the sample's high-frequency period m·t − lead.
            let end = burn + cfg.m * t - cfg.lead;
            let mut v = cfg.alpha;
            for k in 0..cfg.k {
                let s: f64 = w[k].iter().enumerate().map(|(j, wj)| wj * xs[k][end - 1 - j]).sum();
                v += cfg.beta[k] * s;
            }
            v + noise.sample(&mut rng)
        })
        .collect();
    let covariates = xs
        .into_iter()
        .enumerate()
        .map(|(k, x)| Series::new(format!("x{}", k + 1), x[burn..].to_vec(), cfg.m))
        .collect::<Result<Vec<_>>>()?;
    MixedFrequencyDataset::new(Series::new("y", y, 1)?, covariates)
}

/// Forecasts with the true conditional mean of the DGP (for the horizon it
/// was built for). Needs no estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleForecaster {
    pub dgp: DgpConfig,
}

struct OracleFitted(DgpConfig);

impl Forecaster for OracleForecaster {
    fn fit(
        &self,
        _train: &MixedFrequencyDataset,
        h_m: usize,
        _seed: RandomSeed,
    ) -> Result<Box<dyn FittedForecaster>> {
        Ok(Box::new(OracleFitted(self.dgp.for_horizon(h_m))))
    }
}

impl FittedForecaster for OracleFitted {
    fn predict(&self, info: &MixedFrequencyDataset, target: usize) -> Result<f64> {
        self.0.conditional_mean(info, target)
    }
}
