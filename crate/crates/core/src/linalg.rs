//! Dense row-major matrices and least squares by Householder QR with
//! column pivoting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// Prepends a column of ones.
    pub fn with_intercept(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            dst[0] = 1.0;
            dst[1..].copy_from_slice(self.row(r));
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (j, &c) in idx.iter().enumerate() {
                out.set(r, j, self.get(r, c));
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution and rank diagnostics.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
}

/// Column-pivoted Householder QR of an `n × p` matrix (`n ≥ p`).
struct PivotedQr {
    n: usize,
    p: usize,
    // Column-major compact storage: R above the diagonal, Householder vectors below.
    a: Vec<f64>,
    diag: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn new(x: &Matrix) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut a = vec![0.0; n * p];
        for r in 0..n {
            for c in 0..p {
                a[c * n + r] = x.get(r, c);
            }
        }
        let mut perm: Vec<usize> = (0..p).collect();
        let mut norms: Vec<f64> = (0..p)
            .map(|c| a[c * n..(c + 1) * n].iter().map(|v| v * v).sum())
            .collect();
        let mut diag = vec![0.0; p];
        let steps = n.min(p);
        let tol_scale = (n.max(p) as f64) * f64::EPSILON * 10.0;
        let mut r00 = 0.0f64;
        let mut rank = steps;
        for k in 0..steps {
            // Pivot on the largest remaining column norm.
            let (best, _) = norms[k..]
                .iter()
                .enumerate()
                .fold((k, -1.0), |acc, (i, &v)| if v > acc.1 { (k + i, v) } else { acc });
            if best != k {
                for r in 0..n {
                    a.swap(k * n + r, best * n + r);
                }
                norms.swap(k, best);
                perm.swap(k, best);
            }
            let col = &mut a[k * n..(k + 1) * n];
            let alpha_norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if k == 0 {
                r00 = alpha_norm;
            }
            if alpha_norm <= tol_scale * r00.max(f64::MIN_POSITIVE) {
                rank = k;
                diag[k] = 0.0;
                break;
            }
            let alpha = if col[k] > 0.0 { -alpha_norm } else { alpha_norm };
            col[k] -= alpha;
            let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
            diag[k] = alpha;
            // Apply H = I - 2 v v^T / (v^T v) to the trailing columns.
            for c in (k + 1)..p {
                let (head, tail) = a.split_at_mut(c * n);
                let v = &head[k * n + k..k * n + n];
                let target = &mut tail[k..n];
                let s: f64 = v.iter().zip(target.iter()).map(|(x, y)| x * y).sum();
                let f = 2.0 * s / vnorm2;
                for (t, vi) in target.iter_mut().zip(v) {
                    *t -= f * vi;
                }
                norms[c] = tail[k + 1..n].iter().map(|v| v * v).sum();
            }
        }
        PivotedQr {
            n,
            p,
            a,
            diag,
            perm,
            rank,
        }
    }

    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.n;
        for k in 0..self.rank {
            let v = &self.a[k * n + k..(k + 1) * n];
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            let s: f64 = v.iter().zip(&y[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vnorm2;
            for (yi, vi) in y[k..].iter_mut().zip(v) {
                *yi -= f * vi;
            }
        }
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut z = vec![0.0; self.p];
        for k in (0..self.rank).rev() {
            let mut s = qty[k];
            for c in (k + 1)..self.rank {
                s -= self.a[c * n + k] * z[c];
            }
            z[k] = s / self.diag[k];
        }
        let mut coef = vec![0.0; self.p];
        for (k, &orig) in self.perm.iter().enumerate() {
            coef[orig] = z[k];
        }
        coef
    }
}

/// Ordinary least squares `min ‖y − Xb‖²` via pivoted QR.
///
/// Rank-deficient designs are rejected, naming the columns the pivoting
/// identified as linearly dependent on the others.
pub fn lstsq(x: &Matrix, y: &[f64]) -> Result<LstsqSolution> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "design has {} rows but response has {}",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() == 0 {
        let rss = y.iter().map(|v| v * v).sum();
        return Ok(LstsqSolution {
            coef: vec![],
            residuals: y.to_vec(),
            rss,
        });
    }
    if x.rows() < x.cols() {
        return Err(Error::SingularDesign {
            message: format!("{} rows for {} columns", x.rows(), x.cols()),
            dependent: (x.rows()..x.cols()).collect(),
        });
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in least-squares problem".into()));
    }
    let qr = PivotedQr::new(x);
    if qr.rank < x.cols() {
        let mut dependent: Vec<usize> = qr.perm[qr.rank..].to_vec();
        dependent.sort_unstable();
        return Err(Error::SingularDesign {
            message: format!("rank {} < {} columns", qr.rank, x.cols()),
            dependent,
        });
    }
    let coef = qr.solve(y);
    let fitted = x.matvec(&coef);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss = residuals.iter().map(|r| r * r).sum();
    Ok(LstsqSolution {
        coef,
        residuals,
        rss,
    })
}

/// Solves the small symmetric positive-definite system `A x = b` by Cholesky.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let s = lstsq(&x, &y).unwrap();
        assert!((s.coef[0] - 1.0).abs() < 1e-12);
        assert!((s.coef[1] - 2.0).abs() < 1e-12);
        assert!(s.rss < 1e-20);
    }

    #[test]
    fn names_dependent_column() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![1.0, 3.0, 3.0],
            vec![1.0, 5.0, 5.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        match lstsq(&x, &[1.0, 2.0, 3.0, 4.0]) {
            Err(Error::SingularDesign { dependent, .. }) => {
                assert_eq!(dependent.len(), 1);
                assert!(dependent[0] == 1 || dependent[0] == 2);
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0], 2).is_none());
    }
}
