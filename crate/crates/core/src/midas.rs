//! Restricted MIDAS (exponential Almon weights, nonlinear least squares),
//! unrestricted U-MIDAS (OLS) and the AR(1) benchmark.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedDesign, BlockKind};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, lstsq, Matrix};
use crate::rng::RandomSeed;

/// Parameters of the second-order exponential Almon lag polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmonTheta {
    pub theta1: f64,
    pub theta2: f64,
}

impl AlmonTheta {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        AlmonTheta { theta1, theta2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `exp(θ1 i + θ2 i²) / Σ exp(…)`
    #[serde(alias = "nealmon")]
    Normalized,
    /// `exp(θ1 i + θ2 i²)`
    #[serde(alias = "almon-nonnorm")]
    NonNormalized,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nealmon" | "normalized" => Ok(Weighting::Normalized),
            "almon-nonnorm" | "non-normalized" => Ok(Weighting::NonNormalized),
            other => Err(Error::config("weighting", format!("unknown weighting `{other}`"))),
        }
    }
}

/// Almon weights at positions `i = 1..=len`. Exponents are shifted by their
/// maximum before exponentiating.
pub fn almon_weights(theta: AlmonTheta, len: usize, weighting: Weighting) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::domain("weight polynomial needs at least one position"));
    }
    if !theta.theta1.is_finite() || !theta.theta2.is_finite() {
        return Err(Error::Numerical(format!("non-finite theta {theta:?}")));
    }
    let exps: Vec<f64> = (1..=len)
        .map(|i| {
            let i = i as f64;
            theta.theta1 * i + theta.theta2 * i * i
        })
        .collect();
    let w = match weighting {
        Weighting::Normalized => {
            let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let num: Vec<f64> = exps.iter().map(|e| (e - max).exp()).collect();
            let den: f64 = num.iter().sum();
            num.into_iter().map(|v| v / den).collect::<Vec<_>>()
        }
        Weighting::NonNormalized => exps.iter().map(|e| e.exp()).collect(),
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "Almon weights overflow for {theta:?}, {len} positions"
        )));
    }
    Ok(w)
}

/// One restricted covariate term: `β · Σ_j w_j(θ) x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidasTerm {
    pub series: String,
    pub beta: f64,
    pub theta: AlmonTheta,
    pub weighting: Weighting,
    pub width: usize,
}

impl MidasTerm {
    pub fn weights(&self) -> Result<Vec<f64>> {
        almon_weights(self.theta, self.width, self.weighting)
    }

    /// MIDAS coefficients `b_j = β · w_j(θ)`.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        Ok(self.weights()?.into_iter().map(|w| self.beta * w).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidasFit {
    pub alpha: f64,
    pub terms: Vec<MidasTerm>,
    /// Unrestricted coefficients of the autoregressive block, if present.
    pub ar: Vec<f64>,
    pub rss: f64,
    pub sigma2: f64,
    pub n_obs: usize,
    pub iterations: usize,
}

impl MidasFit {
    /// Full coefficient vector over the design columns.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for t in &self.terms {
            out.extend(t.coefficients()?);
        }
        out.extend_from_slice(&self.ar);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UMidasFit {
    pub alpha: f64,
    pub coef: Vec<f64>,
    pub columns: Vec<String>,
    pub rss: f64,
    pub sigma2: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Fit {
    pub intercept: f64,
    pub slope: f64,
    /// Low-frequency lag of the regressor.
    pub h: usize,
    pub sigma2: f64,
    pub n_obs: usize,
}

/// Linear prediction from one aligned feature row.
pub trait LinearPredictor {
    fn n_inputs(&self) -> usize;
    fn predict_row(&self, row: &[f64]) -> Result<f64>;

    fn predict(&self, rows: &Matrix) -> Result<Vec<f64>> {
        (0..rows.rows()).map(|r| self.predict_row(rows.row(r))).collect()
    }
}

fn check_width(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(format!(
            "row has {got} columns, fit expects {expected}"
        )));
    }
    Ok(())
}

impl LinearPredictor for MidasFit {
    fn n_inputs(&self) -> usize {
        self.terms.iter().map(|t| t.width).sum::<usize>() + self.ar.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        check_width(self.n_inputs(), row.len())?;
        Ok(self.alpha + dot(&self.coefficients()?, row))
    }

    fn predict(&self, rows: &Matrix) -> Result<Vec<f64>> {
        check_width(self.n_inputs(), rows.cols())?;
        let b = self.coefficients()?;
        Ok((0..rows.rows())
            .map(|r| self.alpha + dot(&b, rows.row(r)))
            .collect())
    }
}

impl LinearPredictor for UMidasFit {
    fn n_inputs(&self) -> usize {
        self.coef.len()
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        check_width(self.coef.len(), row.len())?;
        Ok(self.alpha + dot(&self.coef, row))
    }
}

impl LinearPredictor for Ar1Fit {
    fn n_inputs(&self) -> usize {
        1
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        check_width(1, row.len())?;
        Ok(self.intercept + self.slope * row[0])
    }
}

/// Unrestricted MIDAS by OLS on every aligned column.
pub fn umidas_fit(ad: &AlignedDesign) -> Result<UMidasFit> {
    let (x, y, _) = ad.usable();
    let p = x.cols();
    if x.rows() <= p + 1 {
        return Err(Error::SingularDesign {
            message: format!("{} valid rows for {} columns plus intercept", x.rows(), p),
            dependent: vec![],
        });
    }
    let sol = lstsq(&x.with_intercept(), &y).map_err(|e| match e {
        Error::SingularDesign { message, dependent } => Error::SingularDesign {
            message,
            // Shift past the intercept column back to design indices.
            dependent: dependent.into_iter().filter(|&c| c > 0).map(|c| c - 1).collect(),
        },
        other => other,
    })?;
    let n = y.len();
    Ok(UMidasFit {
        alpha: sol.coef[0],
        coef: sol.coef[1..].to_vec(),
        columns: ad.column_names(),
        rss: sol.rss,
        sigma2: sol.rss / (n - p - 1) as f64,
        n_obs: n,
    })
}

/// AR(1) benchmark: OLS of `y_t` on `y_{t−h}`.
pub fn ar1_fit(y: &[f64], h: usize) -> Result<Ar1Fit> {
    if h == 0 {
        return Err(Error::domain("AR lag must be >= 1"));
    }
    if y.len() < 3 || y.len() < h + 2 {
        return Err(Error::shape(format!(
            "AR(1) with lag {h} needs more than {} observations",
            y.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (h..y.len()).map(|i| vec![1.0, y[i - h]]).collect();
    let resp: Vec<f64> = y[h..].to_vec();
    let x = Matrix::from_rows(&rows)?;
    let n = resp.len();
    let (intercept, slope, rss) = match lstsq(&x, &resp) {
        Ok(sol) => (sol.coef[0], sol.coef[1], sol.rss),
        // Constant regressor: fall back to the mean forecast.
        Err(Error::SingularDesign { .. }) => {
            let mean = resp.iter().sum::<f64>() / n as f64;
            let rss = resp.iter().map(|v| (v - mean).powi(2)).sum();
            (mean, 0.0, rss)
        }
        Err(e) => return Err(e),
    };
    Ok(Ar1Fit {
        intercept,
        slope,
        h,
        sigma2: if n > 2 { rss / (n - 2) as f64 } else { 0.0 },
        n_obs: n,
    })
}

/// Multistart and stopping settings for [`midas_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidasOptions {
    /// Deterministic starting points; each is applied to every covariate.
    pub grid: Vec<AlmonTheta>,
    /// Additional starts drawn around random grid points.
    pub jitter_starts: usize,
    pub jitter_sd: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for MidasOptions {
    fn default() -> Self {
        let mut grid = Vec::new();
        for t1 in [-1.0, 0.0, 0.7] {
            for t2 in [-0.5, -0.1, -0.01] {
                grid.push(AlmonTheta::new(t1, t2));
            }
        }
        MidasOptions {
            grid,
            jitter_starts: 4,
            jitter_sd: 0.25,
            max_iter: 200,
            rel_tol: 1e-10,
        }
    }
}

struct Profile<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    // (start column, width) of each restricted block
    restricted: Vec<(usize, usize)>,
    weighting: Vec<Weighting>,
    ar_cols: Vec<usize>,
}

struct ProfileEval {
    coef: Vec<f64>,
    residuals: Vec<f64>,
    rss: f64,
}

impl Profile<'_> {
    fn eval(&self, theta: &[f64]) -> Result<ProfileEval> {
        let n = self.x.rows();
        let k = self.restricted.len();
        let q = 1 + k + self.ar_cols.len();
        let mut z = Matrix::zeros(n, q);
        let mut weights = Vec::with_capacity(k);
        for (i, &(_, width)) in self.restricted.iter().enumerate() {
            let th = AlmonTheta::new(theta[2 * i], theta[2 * i + 1]);
            weights.push(almon_weights(th, width, self.weighting[i])?);
        }
        for r in 0..n {
            let row = self.x.row(r);
            let zr = z.row_mut(r);
            zr[0] = 1.0;
            for (i, &(start, width)) in self.restricted.iter().enumerate() {
                zr[1 + i] = dot(&weights[i], &row[start..start + width]);
            }
            for (i, &c) in self.ar_cols.iter().enumerate() {
                zr[1 + k + i] = row[c];
            }
        }
        let sol = lstsq(&z, self.y)?;
        Ok(ProfileEval {
            coef: sol.coef,
            residuals: sol.residuals,
            rss: sol.rss,
        })
    }
}

struct LmOutcome {
    theta: Vec<f64>,
    eval: ProfileEval,
    iterations: usize,
}

// Levenberg–Marquardt on the profiled residual r(θ) = y − Z(θ) γ̂(θ).
fn levenberg_marquardt(profile: &Profile, start: Vec<f64>, opts: &MidasOptions) -> Result<LmOutcome> {
    let p = start.len();
    let n = profile.y.len();
    let mut theta = start;
    let mut cur = profile.eval(&theta)?;
    let floor = 1e-28 * (1.0 + profile.y.iter().map(|v| v * v).sum::<f64>());
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iter && cur.rss > floor {
        iterations += 1;
        // Central-difference Jacobian of the residual vector.
        let mut jac = vec![0.0; n * p];
        let mut ok = true;
        for c in 0..p {
            let step = 1e-6 * theta[c].abs().max(1.0);
            let mut tp = theta.clone();
            tp[c] += step;
            let mut tm = theta.clone();
            tm[c] -= step;
            match (profile.eval(&tp), profile.eval(&tm)) {
                (Ok(a), Ok(b)) => {
                    for r in 0..n {
                        jac[r * p + c] = (a.residuals[r] - b.residuals[r]) / (2.0 * step);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let mut jtj = vec![0.0; p * p];
        let mut jtr = vec![0.0; p];
        for r in 0..n {
            let jr = &jac[r * p..(r + 1) * p];
            for a in 0..p {
                jtr[a] += jr[a] * cur.residuals[r];
                for b in 0..p {
                    jtj[a * p + b] += jr[a] * jr[b];
                }
            }
        }
        let grad_norm = jtr.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if grad_norm <= 1e-14 * (1.0 + cur.rss) {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..p {
                a[d * p + d] += mu * (1.0 + jtj[d * p + d]);
            }
            let neg: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(delta) = cholesky_solve(&a, &neg, p) else {
                mu *= 4.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
            match profile.eval(&trial) {
                Ok(ev) if ev.rss.is_finite() && ev.rss < cur.rss => {
                    let rel = (cur.rss - ev.rss) / cur.rss.max(f64::MIN_POSITIVE);
                    theta = trial;
                    cur = ev;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    if rel < opts.rel_tol {
                        return Ok(LmOutcome {
                            theta,
                            eval: cur,
                            iterations,
                        });
                    }
                    break;
                }
                _ => mu *= 4.0,
            }
            if mu > 1e16 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(LmOutcome {
        theta,
        eval: cur,
        iterations,
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Restricted MIDAS by profiled nonlinear least squares.
///
/// Every covariate block is restricted with its own `(β, θ)`; an
/// autoregressive block, if present, enters linearly. `weighting` holds one
/// entry per covariate block.
pub fn midas_fit(
    ad: &AlignedDesign,
    weighting: &[Weighting],
    seed: RandomSeed,
    opts: &MidasOptions,
) -> Result<MidasFit> {
    let (x, y, _) = ad.usable();
    let cov_blocks: Vec<_> = ad
        .blocks
        .iter()
        .filter(|b| matches!(b.kind, BlockKind::Covariate(_)))
        .collect();
    if weighting.len() != cov_blocks.len() {
        return Err(Error::shape(format!(
            "{} weighting choices for {} covariate blocks",
            weighting.len(),
            cov_blocks.len()
        )));
    }
    let ar_cols: Vec<usize> = ad
        .blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Autoregressive)
        .flat_map(|b| b.columns())
        .collect();
    let k = cov_blocks.len();
    let n_params = 1 + 3 * k + ar_cols.len();
    if x.rows() < n_params {
        return Err(Error::SingularDesign {
            message: format!("{} valid rows for {} parameters", x.rows(), n_params),
            dependent: vec![],
        });
    }
    let profile = Profile {
        x: &x,
        y: &y,
        restricted: cov_blocks.iter().map(|b| (b.start, b.width())).collect(),
        weighting: weighting.to_vec(),
        ar_cols,
    };

    let mut starts: Vec<Vec<f64>> = opts
        .grid
        .iter()
        .map(|g| (0..k).flat_map(|_| [g.theta1, g.theta2]).collect())
        .collect();
    if opts.jitter_starts > 0 && !opts.grid.is_empty() {
        let mut rng = seed.derive("multistart", 0).rng();
        let noise = Normal::new(0.0, opts.jitter_sd.max(0.0))
            .map_err(|e| Error::domain(e.to_string()))?;
        for _ in 0..opts.jitter_starts {
            let mut s = Vec::with_capacity(2 * k);
            for _ in 0..k {
                let g = opts.grid[rng.random_range(0..opts.grid.len())];
                s.push(g.theta1 + noise.sample(&mut rng));
                s.push(g.theta2 + noise.sample(&mut rng));
            }
            starts.push(s);
        }
    }
    if k == 0 {
        starts = vec![vec![]];
    }

    let mut best: Option<LmOutcome> = None;
    let mut last_err = None;
    for start in starts {
        match levenberg_marquardt(&profile, start, opts) {
            Ok(out) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-12 * b.eval.rss.abs().max(1e-300);
                        out.eval.rss < b.eval.rss - tol
                            || ((out.eval.rss - b.eval.rss).abs() <= tol
                                && lex_less(&out.theta, &b.theta))
                    }
                };
                if better {
                    best = Some(out);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e @ Error::SingularDesign { .. })) => return Err(e),
        (None, e) => {
            return Err(Error::Convergence(
                e.map_or_else(|| "no starting points".to_string(), |e| e.to_string()),
            ))
        }
    };
    let terms = cov_blocks
        .iter()
        .enumerate()
        .map(|(i, b)| MidasTerm {
            series: b.series.clone(),
            beta: best.eval.coef[1 + i],
            theta: AlmonTheta::new(best.theta[2 * i], best.theta[2 * i + 1]),
            weighting: weighting[i],
            width: b.width(),
        })
        .collect();
    let n = y.len();
    let dof = n.saturating_sub(n_params).max(1);
    Ok(MidasFit {
        alpha: best.eval.coef[0],
        terms,
        ar: best.eval.coef[1 + k..].to_vec(),
        rss: best.eval.rss,
        sigma2: best.eval.rss / dof as f64,
        n_obs: n,
        iterations: best.iterations,
    })
}
