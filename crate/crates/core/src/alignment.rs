//! Frequency alignment (one low-frequency column per high-frequency lag)
//! and sampling alignment (sequences of raw high-frequency observations).
//!
//! Timing convention: for low-frequency target `t`, covariate `k` with ratio
//! `m_k` and horizon `h_k` (in its own units), lag `j` reads
//! `x_k[m_k·t − h_k − j]`. The autoregressive block reads `y[t − h − j]`.
//! Row features are ordered covariate by covariate in dataset order, lags
//! ascending within each block, autoregressive block last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::series::MixedFrequencyDataset;

/// Inclusive lag range in the variable's own sampling units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LagSpec {
    pub j_min: usize,
    pub j_max: usize,
}

impl LagSpec {
    pub fn new(j_min: usize, j_max: usize) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::domain(format!("lag spec {j_min}..{j_max} is empty")));
        }
        Ok(LagSpec { j_min, j_max })
    }

    /// Lags `0..count-1`.
    pub fn first(count: usize) -> Self {
        assert!(count >= 1, "lag count must be positive");
        LagSpec {
            j_min: 0,
            j_max: count - 1,
        }
    }

    pub fn width(&self) -> usize {
        self.j_max - self.j_min + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.j_min..=self.j_max
    }
}

/// Per-covariate horizons in each covariate's own units, plus the
/// low-frequency lag `h` applied to autoregressive terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub covariate: Vec<usize>,
    pub target: usize,
}

impl HorizonSpec {
    /// Horizon of `h_m` periods at reference frequency `m_ref`, converted to
    /// each covariate's frequency by `ceil(h_m·m_k / m_ref)`; the AR lag is
    /// `ceil(h_m / m_ref)`.
    pub fn from_reference(h_m: usize, m_ref: usize, ratios: &[usize]) -> Self {
        let covariate = ratios.iter().map(|&m| (h_m * m).div_ceil(m_ref)).collect();
        HorizonSpec {
            covariate,
            target: h_m.div_ceil(m_ref),
        }
    }

    /// Same `h_m` for every covariate (single-mismatch setups).
    pub fn uniform(h_m: usize, m: usize, n_covariates: usize) -> Self {
        HorizonSpec {
            covariate: vec![h_m; n_covariates],
            target: h_m.div_ceil(m),
        }
    }

    /// Leading index `d = max(m − h_m, 0)` for a covariate with ratio `m`.
    pub fn leading_index(h_m: usize, m: usize) -> usize {
        m.saturating_sub(h_m)
    }
}

/// Everything [`frequency_align`] needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignSpec {
    pub lags: Vec<LagSpec>,
    pub horizon: HorizonSpec,
    pub ar_lags: Option<LagSpec>,
}

impl AlignSpec {
    pub fn new(lags: Vec<LagSpec>, horizon: HorizonSpec, ar_lags: Option<LagSpec>) -> Result<Self> {
        if lags.len() != horizon.covariate.len() {
            return Err(Error::shape(format!(
                "{} lag specs for {} covariate horizons",
                lags.len(),
                horizon.covariate.len()
            )));
        }
        Ok(AlignSpec {
            lags,
            horizon,
            ar_lags,
        })
    }

    pub fn n_features(&self) -> usize {
        self.lags.iter().map(LagSpec::width).sum::<usize>()
            + self.ar_lags.map_or(0, |l| l.width())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Covariate(usize),
    Autoregressive,
}

/// Contiguous columns belonging to one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub series: String,
    pub kind: BlockKind,
    pub lags: LagSpec,
    pub start: usize,
}

impl Block {
    pub fn width(&self) -> usize {
        self.lags.width()
    }

    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width()
    }
}

/// Low-frequency design produced by frequency alignment. Row `i` is
/// target period `t = i + 1`; entries of rows whose features are
/// unavailable are stored as `0.0` and flagged in `features_valid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDesign {
    pub blocks: Vec<Block>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub features_valid: Vec<bool>,
    pub valid: Vec<bool>,
}

impl AlignedDesign {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Column labels `<series>_lag<j>`.
    pub fn column_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| b.lags.iter().map(move |j| format!("{}_lag{}", b.series, j)))
            .collect()
    }

    /// Target periods (1-based) of the valid rows.
    pub fn valid_periods(&self) -> Vec<usize> {
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Valid rows only: `(X, y, periods)`.
    pub fn usable(&self) -> (Matrix, Vec<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| self.valid[i]).collect();
        let x = self.x.select_rows(&idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (x, y, idx.iter().map(|i| i + 1).collect())
    }

    /// Keeps only the blocks of the named series (autoregressive block,
    /// named by the target id, is kept when listed).
    pub fn select_blocks(&self, series: &[String]) -> AlignedDesign {
        let mut cols = Vec::new();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            if series.iter().any(|s| s == &b.series) {
                let mut nb = b.clone();
                nb.start = cols.len();
                cols.extend(b.columns());
                blocks.push(nb);
            }
        }
        AlignedDesign {
            blocks,
            x: self.x.select_cols(&cols),
            y: self.y.clone(),
            features_valid: self.features_valid.clone(),
            valid: self.valid.clone(),
        }
    }
}

/// Feature vector for target period `t`, or `None` when any required
/// observation is out of range or masked. Does not need `y_t` itself.
pub fn feature_row(ds: &MixedFrequencyDataset, spec: &AlignSpec, t: usize) -> Option<Vec<f64>> {
    let mut row = Vec::with_capacity(spec.n_features());
    for ((x, lags), &h) in ds.covariates().iter().zip(&spec.lags).zip(&spec.horizon.covariate) {
        let end = (x.ratio() * t).checked_sub(h)?;
        for j in lags.iter() {
            row.push(x.get(end.checked_sub(j)?)?);
        }
    }
    if let Some(ar) = spec.ar_lags {
        let end = t.checked_sub(spec.horizon.target)?;
        for j in ar.iter() {
            row.push(ds.target().get(end.checked_sub(j)?)?);
        }
    }
    Some(row)
}

fn check_lengths(ds: &MixedFrequencyDataset) -> Result<()> {
    let report = ds.validate();
    if report.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{} (len {} != {})", v.series, v.actual, v.expected))
            .collect();
        Err(Error::shape(format!(
            "covariate lengths violate m_k·n: {}",
            names.join(", ")
        )))
    }
}

/// Frequency alignment of every covariate into lag blocks.
pub fn frequency_align(ds: &MixedFrequencyDataset, spec: &AlignSpec) -> Result<AlignedDesign> {
    check_lengths(ds)?;
    if spec.lags.len() != ds.covariates().len() {
        return Err(Error::shape(format!(
            "{} lag specs for {} covariates",
            spec.lags.len(),
            ds.covariates().len()
        )));
    }
    let mut blocks = Vec::new();
    let mut start = 0;
    for (k, (x, lags)) in ds.covariates().iter().zip(&spec.lags).enumerate() {
        blocks.push(Block {
            series: x.id().to_string(),
            kind: BlockKind::Covariate(k),
            lags: *lags,
            start,
        });
        start += lags.width();
    }
    if let Some(ar) = spec.ar_lags {
        blocks.push(Block {
            series: ds.target().id().to_string(),
            kind: BlockKind::Autoregressive,
            lags: ar,
            start,
        });
        start += ar.width();
    }
    let n = ds.n();
    let mut x = Matrix::zeros(n, start);
    let mut y = vec![0.0; n];
    let mut features_valid = vec![false; n];
    let mut valid = vec![false; n];
    for t in 1..=n {
        if let Some(row) = feature_row(ds, spec, t) {
            x.row_mut(t - 1).copy_from_slice(&row);
            features_valid[t - 1] = true;
        }
        match ds.target().get(t) {
            Some(v) => {
                y[t - 1] = v;
                valid[t - 1] = features_valid[t - 1];
            }
            None => valid[t - 1] = false,
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::alignment("no feasible rows"));
    }
    Ok(AlignedDesign {
        blocks,
        x,
        y,
        features_valid,
        valid,
    })
}

/// Sequences shaped `{batch, timesteps, features}` with one target each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBatch {
    pub batch: usize,
    pub timesteps: usize,
    pub features: usize,
    /// Row-major `batch × timesteps × features`.
    pub data: Vec<f64>,
    pub targets: Vec<f64>,
    /// Low-frequency target period of each sequence.
    pub periods: Vec<usize>,
}

impl TensorBatch {
    pub fn new(timesteps: usize, features: usize) -> Self {
        TensorBatch {
            batch: 0,
            timesteps,
            features,
            data: Vec::new(),
            targets: Vec::new(),
            periods: Vec::new(),
        }
    }

    pub fn push(&mut self, sequence: &[f64], target: f64, period: usize) {
        debug_assert_eq!(sequence.len(), self.timesteps * self.features);
        self.data.extend_from_slice(sequence);
        self.targets.push(target);
        self.periods.push(period);
        self.batch += 1;
    }

    pub fn sequence(&self, b: usize) -> &[f64] {
        let len = self.timesteps * self.features;
        &self.data[b * len..(b + 1) * len]
    }

    pub fn step(&self, b: usize, s: usize) -> &[f64] {
        let off = (b * self.timesteps + s) * self.features;
        &self.data[off..off + self.features]
    }

    pub fn subset(&self, idx: &[usize]) -> TensorBatch {
        let mut out = TensorBatch::new(self.timesteps, self.features);
        for &i in idx {
            out.push(self.sequence(i), self.targets[i], self.periods[i]);
        }
        out
    }

    pub fn split_at(&self, n_first: usize) -> (TensorBatch, TensorBatch) {
        let n_first = n_first.min(self.batch);
        let a: Vec<usize> = (0..n_first).collect();
        let b: Vec<usize> = (n_first..self.batch).collect();
        (self.subset(&a), self.subset(&b))
    }
}

/// Parameters of sampling alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub timesteps: usize,
    /// High-frequency steps between successive timesteps of one sequence.
    pub within_rate: usize,
    /// Horizon in high-frequency units; a sequence for `y_t` ends at `m·t − h_m`.
    pub h_m: usize,
}

fn common_ratio(ds: &MixedFrequencyDataset) -> Result<usize> {
    let ratios = ds.ratios();
    let first = *ratios
        .first()
        .ok_or_else(|| Error::alignment("sampling alignment needs at least one covariate"))?;
    if ratios.iter().any(|&m| m != first) {
        return Err(Error::MultipleMismatch(format!("{ratios:?}")));
    }
    Ok(first)
}

/// One sampling-aligned sequence for target `t` (chronological order),
/// `None` if the history is insufficient or masked.
pub fn sample_sequence(ds: &MixedFrequencyDataset, spec: &SampleSpec, t: usize) -> Option<Vec<f64>> {
    let m = ds.covariates().first()?.ratio();
    let end = (m * t).checked_sub(spec.h_m)?;
    let span = (spec.timesteps - 1) * spec.within_rate;
    let first = end.checked_sub(span)?;
    if first < 1 {
        return None;
    }
    let mut seq = Vec::with_capacity(spec.timesteps * ds.covariates().len());
    for s in 0..spec.timesteps {
        let idx = first + s * spec.within_rate;
        for x in ds.covariates() {
            seq.push(x.get(idx)?);
        }
    }
    Some(seq)
}

/// Sampling alignment for single-mismatch data: one sequence per target
/// with enough history, successive sequences shifted by `m`.
pub fn sample_align(ds: &MixedFrequencyDataset, spec: &SampleSpec) -> Result<TensorBatch> {
    if spec.timesteps == 0 || spec.within_rate == 0 {
        return Err(Error::domain("timesteps and within_rate must be >= 1"));
    }
    common_ratio(ds)?;
    check_lengths(ds)?;
    let mut out = TensorBatch::new(spec.timesteps, ds.covariates().len());
    for t in 1..=ds.n() {
        let Some(y) = ds.target().get(t) else { continue };
        if let Some(seq) = sample_sequence(ds, spec, t) {
            out.push(&seq, y, t);
        }
    }
    if out.batch == 0 {
        return Err(Error::alignment("no feasible rows"));
    }
    Ok(out)
}

/// Stacks aligned rows `t−timesteps+1..=t` into one sequence per target.
pub fn design_to_tensor(ad: &AlignedDesign, timesteps: usize) -> Result<TensorBatch> {
    if timesteps == 0 {
        return Err(Error::domain("timesteps must be >= 1"));
    }
    let p = ad.n_features();
    let mut out = TensorBatch::new(timesteps, p);
    let mut seq = Vec::with_capacity(timesteps * p);
    for i in (timesteps - 1)..ad.n_rows() {
        if !ad.valid[i] {
            continue;
        }
        let first = i + 1 - timesteps;
        if !(first..=i).all(|r| ad.features_valid[r]) {
            continue;
        }
        seq.clear();
        for r in first..=i {
            seq.extend_from_slice(ad.x.row(r));
        }
        out.push(&seq, ad.y[i], i + 1);
    }
    if out.batch == 0 {
        return Err(Error::alignment(format!(
            "fewer than {timesteps} consecutive valid rows"
        )));
    }
    Ok(out)
}

/// Frequency-aligned sequence for target `t` built directly from the data,
/// usable beyond the end of the target series.
pub fn design_sequence(
    ds: &MixedFrequencyDataset,
    spec: &AlignSpec,
    t: usize,
    timesteps: usize,
) -> Option<Vec<f64>> {
    let first = (t + 1).checked_sub(timesteps)?;
    if first < 1 {
        return None;
    }
    let mut seq = Vec::with_capacity(timesteps * spec.n_features());
    for r in first..=t {
        seq.extend(feature_row(ds, spec, r)?);
    }
    Some(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Series;

    fn single(n: usize, m: usize) -> MixedFrequencyDataset {
        let y = Series::new("y", (1..=n).map(|v| v as f64 * 100.0).collect(), 1).unwrap();
        let x = Series::new("x", (1..=m * n).map(|v| v as f64).collect(), m).unwrap();
        MixedFrequencyDataset::new(y, vec![x]).unwrap()
    }

    fn two_freq(n: usize) -> MixedFrequencyDataset {
        let y = Series::new("y", (1..=n).map(|v| v as f64).collect(), 1).unwrap();
        let x1 = Series::new("x1", (1..=3 * n).map(|v| v as f64).collect(), 3).unwrap();
        let x2 = Series::new("x2", (1..=6 * n).map(|v| 1000.0 + v as f64).collect(), 6).unwrap();
        MixedFrequencyDataset::new(y, vec![x1, x2]).unwrap()
    }

    #[test]
    fn contemporaneous_block_matches_matrix_form() {
        let ds = single(3, 3);
        let spec = AlignSpec::new(vec![LagSpec::first(3)], HorizonSpec::uniform(0, 3, 1), None)
            .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        assert_eq!(ad.x.row(1), &[6.0, 5.0, 4.0]);
        assert_eq!(ad.x.row(0), &[3.0, 2.0, 1.0]);
        assert_eq!(ad.column_names(), vec!["x_lag0", "x_lag1", "x_lag2"]);
    }

    #[test]
    fn lag_four_invalidates_first_row() {
        let ds = single(3, 3);
        let spec = AlignSpec::new(vec![LagSpec::first(5)], HorizonSpec::uniform(0, 3, 1), None)
            .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        assert!(!ad.valid[0]);
        assert!(ad.valid[1]);
        assert_eq!(ad.x.row(1), &[6.0, 5.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn contemporaneous_only() {
        let y = Series::new("y", vec![0.0, 0.0], 1).unwrap();
        let x = Series::new("x", vec![10., 20., 30., 40., 50., 60.], 3).unwrap();
        let ds = MixedFrequencyDataset::new(y, vec![x]).unwrap();
        let spec = AlignSpec::new(vec![LagSpec::first(1)], HorizonSpec::uniform(0, 3, 1), None)
            .unwrap();
        let (x, _, _) = frequency_align(&ds, &spec).unwrap().usable();
        assert_eq!(x.as_slice(), &[30.0, 60.0]);
    }

    #[test]
    fn two_mismatches_follow_figure_schedule() {
        let ds = two_freq(4);
        let spec = AlignSpec::new(
            vec![LagSpec::first(5), LagSpec::first(5)],
            HorizonSpec::uniform(0, 3, 2),
            None,
        )
        .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        assert!(!ad.valid[0]);
        assert_eq!(
            ad.x.row(1),
            &[6., 5., 4., 3., 2., 1012., 1011., 1010., 1009., 1008.]
        );
        // Two timesteps: first feasible sequence predicts y_3 from rows 2 and 3.
        let tb = design_to_tensor(&ad, 2).unwrap();
        assert_eq!(tb.periods[0], 3);
        assert_eq!(tb.step(0, 0), ad.x.row(1));
        assert_eq!(tb.step(0, 1), ad.x.row(2));
    }

    #[test]
    fn different_lag_structures() {
        let ds = two_freq(4);
        let spec = AlignSpec::new(
            vec![LagSpec::new(0, 4).unwrap(), LagSpec::new(1, 3).unwrap()],
            HorizonSpec::uniform(0, 3, 2),
            None,
        )
        .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        assert_eq!(ad.x.row(2), &[9., 8., 7., 6., 5., 1017., 1016., 1015.]);
    }

    #[test]
    fn horizon_shifts_the_block() {
        let ds = single(4, 3);
        let at = |h| {
            let spec =
                AlignSpec::new(vec![LagSpec::first(2)], HorizonSpec::uniform(h, 3, 1), None)
                    .unwrap();
            frequency_align(&ds, &spec).unwrap()
        };
        assert_eq!(at(1).x.row(3), &[11.0, 10.0]);
        assert_eq!(at(2).x.row(3), &[10.0, 9.0]);
    }

    #[test]
    fn ar_block_uses_low_frequency_lag() {
        let ds = single(5, 3);
        let spec = AlignSpec::new(
            vec![LagSpec::first(1)],
            HorizonSpec::uniform(1, 3, 1),
            Some(LagSpec::first(2)),
        )
        .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        // Target t=4: x[11], y[3], y[2].
        assert_eq!(ad.x.row(3), &[11.0, 300.0, 200.0]);
        assert!(!ad.valid[1]);
        assert!(ad.valid[2]);
    }

    #[test]
    fn empty_design_is_an_error() {
        let ds = single(2, 3);
        let spec = AlignSpec::new(vec![LagSpec::first(12)], HorizonSpec::uniform(0, 3, 1), None)
            .unwrap();
        assert!(matches!(frequency_align(&ds, &spec), Err(Error::Alignment(_))));
    }

    #[test]
    fn sample_align_first_sequence() {
        let ds = single(4, 3);
        let spec = SampleSpec {
            timesteps: 5,
            within_rate: 1,
            h_m: 0,
        };
        let tb = sample_align(&ds, &spec).unwrap();
        assert_eq!(tb.periods[0], 2);
        assert_eq!(tb.sequence(0), &[2., 3., 4., 5., 6.]);
        // Next sequence is shifted by m = 3.
        assert_eq!(tb.sequence(1), &[5., 6., 7., 8., 9.]);
    }

    #[test]
    fn sample_align_identity_and_counts() {
        let ds = single(4, 1);
        let tb = sample_align(
            &ds,
            &SampleSpec {
                timesteps: 1,
                within_rate: 1,
                h_m: 0,
            },
        )
        .unwrap();
        assert_eq!(tb.data, vec![1.0, 2.0, 3.0, 4.0]);
        let ds = single(4, 3);
        let spec = SampleSpec {
            timesteps: 6,
            within_rate: 1,
            h_m: 0,
        };
        // Brute force: y_t feasible iff 3t − 5 ≥ 1.
        let expected = (1..=4usize).filter(|t| 3 * t >= 6).count();
        assert_eq!(sample_align(&ds, &spec).unwrap().batch, expected);
        assert_eq!(expected, 3);
    }

    #[test]
    fn sample_align_rejects_mixed_ratios() {
        let ds = two_freq(4);
        let spec = SampleSpec {
            timesteps: 2,
            within_rate: 1,
            h_m: 0,
        };
        assert!(matches!(sample_align(&ds, &spec), Err(Error::MultipleMismatch(_))));
    }

    #[test]
    fn tensor_window_count() {
        let ds = single(7, 3);
        let spec = AlignSpec::new(vec![LagSpec::first(6)], HorizonSpec::uniform(0, 3, 1), None)
            .unwrap();
        let ad = frequency_align(&ds, &spec).unwrap();
        assert_eq!(ad.valid.iter().filter(|v| **v).count(), 6);
        let ad5 = AlignedDesign {
            valid: {
                let mut v = ad.valid.clone();
                v[6] = false;
                v
            },
            features_valid: {
                let mut v = ad.features_valid.clone();
                v[6] = false;
                v
            },
            ..ad.clone()
        };
        // Five consecutive valid rows and windows of three: 5 − 3 + 1.
        assert_eq!(design_to_tensor(&ad5, 3).unwrap().batch, 3);
        let tb1 = design_to_tensor(&ad, 1).unwrap();
        let (x, _, _) = ad.usable();
        assert_eq!(tb1.data, x.into_vec());
    }
}
