use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedDesign, BlockKind};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};

const TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;
/// Path early exit: deviance ratio reached, or its fractional change fell
/// below the threshold.
const DEV_MAX: f64 = 0.999;
const DEV_CHANGE: f64 = 1e-5;

/// Coefficients on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub sweeps: usize,
}

/// Column standardization; zero-variance columns are flagged and excluded.
struct Standardized {
    /// Column-major standardized data of active columns.
    cols: Vec<Vec<f64>>,
    active: Vec<usize>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
    p: usize,
}

fn standardize(x: &Matrix, y: &[f64]) -> Result<Standardized> {
    let (n, p) = (x.rows(), x.cols());
    if n != y.len() {
        return Err(Error::shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < 2 {
        return Err(Error::shape("LASSO needs at least 2 rows"));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let yc = y.iter().map(|v| v - y_mean).collect();
    let mut cols = Vec::new();
    let mut active = Vec::new();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let c = x.column(j);
        let m = c.iter().sum::<f64>() / nf;
        let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
        mean[j] = m;
        sd[j] = s;
        if s <= 1e-12 * (1.0 + m.abs()) {
            log::warn!("LASSO: column {j} has zero variance and is dropped");
            continue;
        }
        active.push(j);
        cols.push(c.iter().map(|v| (v - m) / s).collect());
    }
    Ok(Standardized {
        cols,
        active,
        mean,
        sd,
        y_mean,
        yc,
        p,
    })
}

fn soft(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

impl Standardized {
    fn lambda_max(&self) -> f64 {
        let n = self.yc.len() as f64;
        self.cols
            .iter()
            .map(|c| (c.iter().zip(&self.yc).map(|(a, b)| a * b).sum::<f64>() / n).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate descent for `RSS/2n + λ‖b‖₁` from a warm start `b`.
    /// Returns the sweep count and the residual sum of squares.
    fn solve(&self, lambda: f64, b: &mut [f64]) -> (usize, f64) {
        let n = self.yc.len() as f64;
        let mut r: Vec<f64> = self.yc.clone();
        for (c, bj) in self.cols.iter().zip(b.iter()) {
            if *bj != 0.0 {
                r.iter_mut().zip(c).for_each(|(ri, xi)| *ri -= bj * xi);
            }
        }
        let mut support: Vec<usize> = Vec::new();
        for sweep in 1..=MAX_SWEEPS {
            // Slow linear convergence on ill-conditioned designs: once the
            // support is stable, try the exact solution for that support.
            if sweep % 25 == 0 {
                let now: Vec<usize> = (0..b.len()).filter(|&j| b[j] != 0.0).collect();
                if now == support && !now.is_empty() {
                    self.kkt_jump(lambda, b, &mut r, &now);
                }
                support = now;
            }
            let mut max_delta = 0.0f64;
            for (j, c) in self.cols.iter().enumerate() {
                let old = b[j];
                let rho = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + old;
                let new = soft(rho, lambda);
                let delta = new - old;
                if delta != 0.0 {
                    r.iter_mut().zip(c).for_each(|(ri, xi)| *ri -= delta * xi);
                    b[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < TOL {
                return (sweep, r.iter().map(|v| v * v).sum());
            }
        }
        log::warn!("LASSO coordinate descent hit {MAX_SWEEPS} sweeps at λ = {lambda}");
        (MAX_SWEEPS, r.iter().map(|v| v * v).sum())
    }

    /// Replaces `b` by the solution of the stationarity equations on
    /// `support` with the current signs, if it satisfies every optimality
    /// condition; otherwise leaves `b` and `r` untouched.
    fn kkt_jump(&self, lambda: f64, b: &mut [f64], r: &mut [f64], support: &[usize]) {
        let n = self.yc.len() as f64;
        let k = support.len();
        if k >= self.yc.len() {
            return;
        }
        let mut gram = vec![0.0; k * k];
        for (a, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate().take(a + 1) {
                let g = dot(&self.cols[i], &self.cols[j]) / n;
                gram[a * k + c] = g;
                gram[c * k + a] = g;
            }
        }
        let rhs: Vec<f64> = support
            .iter()
            .map(|&j| dot(&self.cols[j], &self.yc) / n - lambda * b[j].signum())
            .collect();
        let Some(beta) = cholesky_solve(&gram, &rhs, k) else {
            return;
        };
        if support
            .iter()
            .zip(&beta)
            .any(|(&j, v)| v.signum() != b[j].signum() || *v == 0.0)
        {
            return;
        }
        let mut res = self.yc.clone();
        for (&j, v) in support.iter().zip(&beta) {
            res.iter_mut().zip(&self.cols[j]).for_each(|(ri, xi)| *ri -= v * xi);
        }
        let slack = lambda * (1.0 + 1e-9) + 1e-12;
        let inactive_ok = (0..self.cols.len())
            .filter(|j| !support.contains(j))
            .all(|j| (dot(&self.cols[j], &res) / n).abs() <= slack);
        if !inactive_ok {
            return;
        }
        for (&j, v) in support.iter().zip(&beta) {
            b[j] = *v;
        }
        r.copy_from_slice(&res);
    }

    fn unscale(&self, lambda: f64, b: &[f64], sweeps: usize) -> LassoFit {
        let mut coef = vec![0.0; self.p];
        let mut intercept = self.y_mean;
        for (k, &j) in self.active.iter().enumerate() {
            coef[j] = b[k] / self.sd[j];
            intercept -= coef[j] * self.mean[j];
        }
        LassoFit {
            lambda,
            intercept,
            coef,
            sweeps,
        }
    }
}

/// LASSO by cyclic coordinate descent on standardized columns with an
/// unpenalized intercept; stops when no coefficient moves by 1e-7.
pub fn lasso_fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::domain("lambda must be >= 0"));
    }
    let s = standardize(x, y)?;
    let mut b = vec![0.0; s.cols.len()];
    let (sweeps, _) = s.solve(lambda, &mut b);
    Ok(s.unscale(lambda, &b, sweeps))
}

/// Fits along a penalty sequence, highest first, with warm starts. Once
/// the fit explains 99.9% of the variance, or the explained share stops
/// moving, the remaining penalties reuse the last solution.
fn fit_path(x: &Matrix, y: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    let s = standardize(x, y)?;
    let tss: f64 = s.yc.iter().map(|v| v * v).sum();
    let mut b = vec![0.0; s.cols.len()];
    let mut out = Vec::with_capacity(lambdas.len());
    let mut prev_dev = 0.0;
    let mut frozen = false;
    for &l in lambdas {
        if frozen {
            out.push(s.unscale(l, &b, 0));
            continue;
        }
        let (sweeps, rss) = s.solve(l, &mut b);
        out.push(s.unscale(l, &b, sweeps));
        if tss > 0.0 {
            let dev = 1.0 - rss / tss;
            frozen = dev >= DEV_MAX || (dev > 0.0 && (dev - prev_dev) < DEV_CHANGE * dev);
            prev_dev = dev;
        }
    }
    Ok(out)
}

/// `count` log-spaced penalties from the full-shrinkage threshold down to
/// `ratio` times it.
pub fn lambda_grid(x: &Matrix, y: &[f64], count: usize, ratio: f64) -> Result<Vec<f64>> {
    let lmax = standardize(x, y)?.lambda_max();
    if lmax <= 0.0 || count == 0 {
        return Ok(vec![0.0]);
    }
    if count == 1 {
        return Ok(vec![lmax]);
    }
    let step = ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lmax * (step * i as f64).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Original-scale slopes per penalty.
    pub coefs: Vec<Vec<f64>>,
    /// Mean rolling-origin squared error per penalty.
    pub cv_scores: Vec<f64>,
    pub folds_used: usize,
    pub best_lambda: f64,
    /// Columns with a nonzero coefficient at `best_lambda` on the full sample.
    pub support: Vec<usize>,
}

/// Regularization path with rolling-origin cross-validation: each of the
/// last `folds` rows is predicted one step ahead from a fit on all earlier
/// rows (expanding window).
pub fn lasso_path(x: &Matrix, y: &[f64], folds: usize, lambdas: &[f64]) -> Result<LassoPath> {
    let n = x.rows();
    if lambdas.is_empty() {
        return Err(Error::domain("empty penalty grid"));
    }
    // A fold needs a training window with more than one row.
    let usable = folds.min(n.saturating_sub(3));
    if usable == 0 {
        return Err(Error::Selection(format!(
            "no usable cross-validation fold with {n} rows"
        )));
    }
    if usable < folds {
        log::warn!("LASSO: only {usable} of {folds} folds usable");
    }
    let mut sse = vec![0.0; lambdas.len()];
    for f in 0..usable {
        let test = n - usable + f;
        let rows: Vec<usize> = (0..test).collect();
        let fits = fit_path(&x.select_rows(&rows), &y[..test], lambdas)?;
        let xt = x.row(test);
        for (s, fit) in sse.iter_mut().zip(&fits) {
            let pred = fit.intercept + fit.coef.iter().zip(xt).map(|(b, v)| b * v).sum::<f64>();
            *s += (y[test] - pred).powi(2);
        }
    }
    let cv_scores: Vec<f64> = sse.iter().map(|s| s / usable as f64).collect();
    // Ties go to the larger penalty (earlier in the grid).
    let best = cv_scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s < cv_scores[b] { i } else { b });
    let full = fit_path(x, y, lambdas)?;
    let support = full[best]
        .coef
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, _)| j)
        .collect();
    Ok(LassoPath {
        lambdas: lambdas.to_vec(),
        coefs: full.into_iter().map(|f| f.coef).collect(),
        cv_scores,
        folds_used: usable,
        best_lambda: lambdas[best],
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSelection {
    /// Selected covariate ids in design order, followed by forced ones.
    pub selected: Vec<String>,
    pub path: LassoPath,
}

/// Variable selection on the usable rows of an aligned design. A covariate
/// is selected when any of its lag columns is nonzero; `always_include` ids
/// are added regardless.
pub fn lasso_select(
    ad: &AlignedDesign,
    folds: usize,
    always_include: &[String],
) -> Result<LassoSelection> {
    let (x, y, _) = ad.usable();
    let lambdas = lambda_grid(&x, &y, 100, 1e-4)?;
    let path = lasso_path(&x, &y, folds, &lambdas)?;
    let mut selected: Vec<String> = Vec::new();
    for b in &ad.blocks {
        if !matches!(b.kind, BlockKind::Covariate(_)) {
            continue;
        }
        if b.columns().any(|c| path.support.contains(&c)) && !selected.contains(&b.series) {
            selected.push(b.series.clone());
        }
    }
    for id in always_include {
        if !selected.contains(id) {
            selected.push(id.clone());
        }
    }
    Ok(LassoSelection { selected, path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_log_spaced_from_threshold() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let y = [1.0, 3.0, 2.0, 5.0];
        let g = lambda_grid(&x, &y, 100, 1e-4).unwrap();
        assert_eq!(g.len(), 100);
        assert!((g[99] / g[0] - 1e-4).abs() < 1e-12);
        let fit = lasso_fit(&x, &y, g[0]).unwrap();
        assert_eq!(fit.coef, vec![0.0]);
    }

    #[test]
    fn constant_column_is_dropped() {
        let x = Matrix::from_rows(&[
            vec![1.0, 7.0],
            vec![2.0, 7.0],
            vec![3.0, 7.0],
            vec![5.0, 7.0],
        ])
        .unwrap();
        let fit = lasso_fit(&x, &[2.0, 4.0, 6.0, 10.0], 0.0).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-6);
        assert_eq!(fit.coef[1], 0.0);
        assert!(fit.intercept.abs() < 1e-6);
    }
}
