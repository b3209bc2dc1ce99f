use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSeed;

/// Minibatch size, either fixed or a fraction of the effective training
/// size rounded up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Absolute(usize),
    Fraction(f64),
}

impl BatchSize {
    pub fn resolve(&self, input: usize) -> usize {
        match *self {
            BatchSize::Absolute(n) => n.max(1),
            BatchSize::Fraction(f) => ((f * input as f64).ceil() as usize).max(1),
        }
    }

    fn key(&self) -> (u8, f64) {
        match *self {
            BatchSize::Absolute(n) => (0, n as f64),
            BatchSize::Fraction(f) => (1, f),
        }
    }
}

/// Candidate values per dimension. Empty `timesteps` / lag-order sets mean
/// the dimension is fixed by the model and not searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub epochs: Vec<usize>,
    pub dropout: Vec<f64>,
    pub batch: Vec<BatchSize>,
    pub cells: Vec<Vec<usize>>,
    #[serde(default)]
    pub timesteps: Vec<usize>,
    #[serde(default)]
    pub monthly_lags: Vec<usize>,
    #[serde(default)]
    pub quarterly_lags: Vec<usize>,
}

impl HyperGrid {
    /// The small grid used for the simulation study; `cells` differs between
    /// sampling- and frequency-aligned models.
    pub fn simulation(cells: &[usize]) -> Self {
        HyperGrid {
            epochs: vec![25, 50],
            dropout: vec![0.0, 0.4],
            batch: vec![
                BatchSize::Absolute(1),
                BatchSize::Fraction(0.1),
                BatchSize::Fraction(0.5),
            ],
            cells: cells.iter().map(|&c| vec![c]).collect(),
            timesteps: Vec::new(),
            monthly_lags: Vec::new(),
            quarterly_lags: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("epochs", self.epochs.is_empty()),
            ("dropout", self.dropout.is_empty()),
            ("batch", self.batch.is_empty()),
            ("cells", self.cells.is_empty()),
        ];
        if let Some((f, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::config(*f, "candidate set is empty"));
        }
        if self.batch.iter().any(|b| match b {
            BatchSize::Absolute(n) => *n == 0,
            BatchSize::Fraction(f) => !(*f > 0.0 && *f <= 1.0),
        }) {
            return Err(Error::config("batch", "sizes must be >= 1, fractions in (0, 1]"));
        }
        if self.cells.iter().any(|c| c.is_empty() || c.contains(&0)) {
            return Err(Error::config("cells", "layer widths must be >= 1"));
        }
        Ok(())
    }

    /// Cartesian product in nested order: epochs, dropout, batch, cells,
    /// timesteps, monthly lags, quarterly lags.
    pub fn combinations(&self) -> Vec<HyperChoice> {
        fn opt(v: &[usize]) -> Vec<Option<usize>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &epochs in &self.epochs {
            for &dropout in &self.dropout {
                for &batch in &self.batch {
                    for cells in &self.cells {
                        for timesteps in opt(&self.timesteps) {
                            for monthly_lags in opt(&self.monthly_lags) {
                                for quarterly_lags in opt(&self.quarterly_lags) {
                                    out.push(HyperChoice {
                                        epochs,
                                        dropout,
                                        batch,
                                        cells: cells.clone(),
                                        timesteps,
                                        monthly_lags,
                                        quarterly_lags,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One point of a [`HyperGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperChoice {
    pub epochs: usize,
    pub dropout: f64,
    pub batch: BatchSize,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub timesteps: Option<usize>,
    #[serde(default)]
    pub monthly_lags: Option<usize>,
    #[serde(default)]
    pub quarterly_lags: Option<usize>,
}

impl HyperChoice {
    /// Total order on values, used as the last tie-break.
    pub fn lexicographic_cmp(&self, other: &Self) -> Ordering {
        let fk = |a: f64, b: f64| a.partial_cmp(&b).unwrap_or(Ordering::Equal);
        self.epochs
            .cmp(&other.epochs)
            .then_with(|| fk(self.dropout, other.dropout))
            .then_with(|| {
                let (a, b) = (self.batch.key(), other.batch.key());
                a.0.cmp(&b.0).then_with(|| fk(a.1, b.1))
            })
            .then_with(|| self.cells.cmp(&other.cells))
            .then_with(|| self.timesteps.cmp(&other.timesteps))
            .then_with(|| self.monthly_lags.cmp(&other.monthly_lags))
            .then_with(|| self.quarterly_lags.cmp(&other.quarterly_lags))
    }
}

/// Scores one combination with one seed, e.g. by training on a split and
/// returning the validation RMSFE.
pub trait GridEvaluator: Sync {
    fn evaluate(&self, choice: &HyperChoice, seed: RandomSeed) -> Result<f64>;
    fn parameter_count(&self, choice: &HyperChoice) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub choice: HyperChoice,
    /// Mean over successful repeats; `None` if every repeat failed.
    pub mean_rmsfe: Option<f64>,
    pub failures: usize,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: HyperChoice,
    pub best_score: f64,
    pub table: Vec<GridScore>,
}

/// Exhaustive search: each combination is scored `repeats` times with seeds
/// that depend only on the repeat index, and the lowest mean wins. Ties go to
/// fewer parameters, then to the lexicographically smaller combination.
pub fn grid_search<E: GridEvaluator>(
    grid: &HyperGrid,
    evaluator: &E,
    repeats: usize,
    seed: RandomSeed,
) -> Result<GridResult> {
    grid.validate()?;
    if repeats == 0 {
        return Err(Error::config("repeats", "must be >= 1"));
    }
    let table: Vec<GridScore> = grid
        .combinations()
        .into_par_iter()
        .map(|choice| {
            let mut sum = 0.0;
            let mut ok = 0;
            for r in 0..repeats {
                match evaluator.evaluate(&choice, seed.derive("grid-repeat", r as u64)) {
                    Ok(s) if s.is_finite() => {
                        sum += s;
                        ok += 1;
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("grid combination {choice:?} failed: {e}"),
                }
            }
            GridScore {
                parameters: evaluator.parameter_count(&choice),
                mean_rmsfe: (ok > 0).then(|| sum / ok as f64),
                failures: repeats - ok,
                choice,
            }
        })
        .collect();
    let best = table
        .iter()
        .filter_map(|s| s.mean_rmsfe.map(|m| (m, s)))
        .min_by(|(a, sa), (b, sb)| {
            a.partial_cmp(b)
                .unwrap_or(Ordering::Equal)
                .then(sa.parameters.cmp(&sb.parameters))
                .then_with(|| sa.choice.lexicographic_cmp(&sb.choice))
        })
        .map(|(m, s)| (m, s.choice.clone()))
        .ok_or_else(|| Error::Selection("every grid combination failed".into()))?;
    Ok(GridResult {
        best: best.1,
        best_score: best.0,
        table,
    })
}
