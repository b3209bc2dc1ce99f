#![allow(dead_code)]

use mixfreq::alignment::{AlignSpec, HorizonSpec, LagSpec};
use mixfreq::{MixedFrequencyDataset, Series};
use rand::Rng;

/// Random dataset with `ratios.len()` covariates and an occasional masked
/// value; targets are distinct so misplaced entries show up.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, ratios: &[usize]) -> MixedFrequencyDataset {
    let y: Vec<f64> = (0..n).map(|i| 1000.0 + i as f64).collect();
    let mut mask: Vec<bool> = vec![true; n];
    if n > 3 && rng.random_bool(0.3) {
        mask[rng.random_range(0..n)] = false;
    }
    let target = Series::with_mask("y", y, mask, 1).unwrap();
    let covs = ratios
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let len = m * n;
            let vals: Vec<f64> = (0..len).map(|i| (k * 10_000 + i + 1) as f64).collect();
            let mut mask = vec![true; len];
            if len > 4 && rng.random_bool(0.3) {
                mask[rng.random_range(0..len)] = false;
            }
            Series::with_mask(format!("x{k}"), vals, mask, m).unwrap()
        })
        .collect();
    MixedFrequencyDataset::new(target, covs).unwrap()
}

pub fn random_spec<R: Rng>(rng: &mut R, ratios: &[usize], with_ar: bool) -> AlignSpec {
    let lags = ratios
        .iter()
        .map(|_| {
            let a = rng.random_range(0..4);
            LagSpec::new(a, a + rng.random_range(0..6)).unwrap()
        })
        .collect();
    let covariate = ratios.iter().map(|_| rng.random_range(0..8)).collect();
    let horizon = HorizonSpec {
        covariate,
        target: rng.random_range(1..4),
    };
    let ar = with_ar.then(|| {
        let a = rng.random_range(0..2);
        LagSpec::new(a, a + rng.random_range(0..3)).unwrap()
    });
    AlignSpec::new(lags, horizon, ar).unwrap()
}

/// Brute force: walks every (t, k, j) and looks the value up by index.
/// Returns per row the feature vector (if every entry exists) and whether
/// the row is usable (features present and target observed).
pub fn align_oracle(ds: &MixedFrequencyDataset, spec: &AlignSpec) -> Vec<(Option<Vec<f64>>, bool)> {
    let mut out = Vec::new();
    for t in 1..=ds.n() {
        let mut row = Vec::new();
        let mut ok = true;
        for k in 0..ds.covariates().len() {
            let x = &ds.covariates()[k];
            let m = x.ratio() as i64;
            let h = spec.horizon.covariate[k] as i64;
            for j in spec.lags[k].j_min..=spec.lags[k].j_max {
                let idx = m * t as i64 - h - j as i64;
                if idx < 1 || idx as usize > x.len() || !x.observed()[idx as usize - 1] {
                    ok = false;
                    row.push(f64::NAN);
                } else {
                    row.push(x.values()[idx as usize - 1]);
                }
            }
        }
        if let Some(ar) = spec.ar_lags {
            for j in ar.j_min..=ar.j_max {
                let idx = t as i64 - spec.horizon.target as i64 - j as i64;
                if idx < 1 || !ds.target().observed()[idx as usize - 1] {
                    ok = false;
                    row.push(f64::NAN);
                } else {
                    row.push(ds.target().values()[idx as usize - 1]);
                }
            }
        }
        let y_ok = ds.target().observed()[t - 1];
        out.push((ok.then_some(row), ok && y_ok));
    }
    out
}

/// `exp(θ1 i + θ2 i²)` evaluated directly, `i = 1..=len`.
pub fn naive_almon(theta1: f64, theta2: f64, len: usize, normalized: bool) -> Vec<f64> {
    let raw: Vec<f64> = (1..=len)
        .map(|i| {
            let i = i as f64;
            (theta1 * i + theta2 * i * i).exp()
        })
        .collect();
    if !normalized {
        return raw;
    }
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}
