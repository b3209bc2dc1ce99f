//! File formats: dataset manifests with one CSV per frequency group,
//! forecast CSVs, aligned designs and result tables.
//!
//! Dataset CSVs have a header `t,<id1>,<id2>,...` where `t` counts the
//! series' own periods from 1. Empty cells, `NA` and `NaN` are missing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignedDesign;
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationReport, ForecastRecord};
use crate::selection::{BatchSize, GridResult};
use crate::series::{MixedFrequencyDataset, Series};
use crate::simulation::McResults;

/// Maps series ids to mismatch ratios and lists the CSV files holding them.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub target: String,
    pub files: Vec<PathBuf>,
    pub ratios: BTreeMap<String, usize>,
    #[serde(default)]
    pub impute_leading_zeros: bool,
}

fn parse_cell(s: &str, file: &Path, row: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| {
        Error::Parse(format!("{}: row {row}: `{s}` is not a number", file.display()))
    })
}

/// Reads one frequency-group CSV into `(id, values)` columns.
pub fn read_group_csv(path: &Path) -> Result<Vec<(String, Vec<Option<f64>>)>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("t") {
        return Err(Error::Parse(format!(
            "{}: first column must be `t`",
            path.display()
        )));
    }
    let mut cols: Vec<(String, Vec<Option<f64>>)> = headers
        .iter()
        .skip(1)
        .map(|h| (h.trim().to_string(), Vec::new()))
        .collect();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let t: usize = rec[0].trim().parse().map_err(|_| {
            Error::Parse(format!("{}: row {row}: bad period `{}`", path.display(), &rec[0]))
        })?;
        if t != row {
            return Err(Error::Parse(format!(
                "{}: periods must run 1, 2, ...; found {t} at row {row}",
                path.display()
            )));
        }
        for (k, col) in cols.iter_mut().enumerate() {
            col.1.push(parse_cell(rec.get(k + 1).unwrap_or(""), path, row)?);
        }
    }
    Ok(cols)
}

fn to_series(id: &str, vals: &[Option<f64>], ratio: usize) -> Result<Series> {
    // trailing missing values are cut: they are not yet published
    let len = vals.iter().rposition(Option::is_some).map_or(0, |p| p + 1);
    let values = vals[..len].iter().map(|v| v.unwrap_or(0.0)).collect();
    let mask = vals[..len].iter().map(Option::is_some).collect();
    Series::with_mask(id, values, mask, ratio)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads the dataset described by a manifest. Covariates keep the order in
/// which they appear across the files.
pub fn load_dataset(manifest_path: &Path) -> Result<MixedFrequencyDataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut target = None;
    let mut covariates = Vec::new();
    let mut seen = BTreeSet::new();
    for file in &manifest.files {
        let path = base.join(file);
        for (id, vals) in read_group_csv(&path)? {
            if !seen.insert(id.clone()) {
                return Err(Error::Parse(format!("series `{id}` appears twice")));
            }
            let ratio = *manifest.ratios.get(&id).ok_or_else(|| {
                Error::config("ratios", format!("no ratio for series `{id}`"))
            })?;
            let s = to_series(&id, &vals, ratio)?;
            if id == manifest.target {
                target = Some(s);
            } else {
                covariates.push(s);
            }
        }
    }
    if let Some(missing) = manifest.ratios.keys().find(|k| !seen.contains(*k)) {
        return Err(Error::config("ratios", format!("series `{missing}` not found in any file")));
    }
    let target = target.ok_or_else(|| {
        Error::config("target", format!("target `{}` not found", manifest.target))
    })?;
    if target.ratio() != 1 {
        return Err(Error::config("ratios", "the target must have ratio 1"));
    }
    let ds = MixedFrequencyDataset::new(target, covariates)?;
    Ok(if manifest.impute_leading_zeros {
        ds.impute_leading_zeros()
    } else {
        ds
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Non-finite values are written as empty cells.
fn num(v: f64) -> String {
    cell(v.is_finite().then_some(v))
}

/// Writes one CSV per mismatch ratio (`ratio_<m>.csv`) plus
/// `manifest.json`; returns the manifest path.
pub fn write_dataset(ds: &MixedFrequencyDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<usize, Vec<&Series>> = BTreeMap::new();
    groups.entry(1).or_default().push(ds.target());
    for c in ds.covariates() {
        groups.entry(c.ratio()).or_default().push(c);
    }
    let mut files = Vec::new();
    let mut ratios = BTreeMap::new();
    for (m, series) in &groups {
        let name = PathBuf::from(format!("ratio_{m}.csv"));
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        let mut header = vec!["t".to_string()];
        header.extend(series.iter().map(|s| s.id().to_string()));
        w.write_record(&header)?;
        let rows = series.iter().map(|s| s.len()).max().unwrap_or(0);
        for t in 1..=rows {
            let mut rec = vec![t.to_string()];
            rec.extend(series.iter().map(|s| cell(s.get(t))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        for s in series {
            ratios.insert(s.id().to_string(), *m);
        }
        files.push(name);
    }
    let manifest = DatasetManifest {
        target: ds.target().id().to_string(),
        files,
        ratios,
        impute_leading_zeros: false,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["origin", "target", "h_m", "forecast", "actual"])?;
    for r in records {
        w.write_record([
            r.origin.to_string(),
            r.target.to_string(),
            r.h_m.to_string(),
            r.forecast.to_string(),
            r.actual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let expected = ["origin", "target", "h_m", "forecast", "actual"];
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != expected {
        return Err(Error::Parse(format!(
            "{}: expected columns {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let r: ForecastRecord = rec?;
        if r.target <= r.origin {
            return Err(Error::Parse(format!(
                "{}: target {} not after origin {}",
                path.display(),
                r.target,
                r.origin
            )));
        }
        out.push(r);
    }
    Ok(out)
}

/// Aligned design as CSV: `t`, one `<series>_lag<j>` column per feature,
/// `y`, and a 0/1 `valid` flag. Unavailable entries are empty.
pub fn write_aligned(path: &Path, ad: &AlignedDesign) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(ad.column_names());
    header.push("y".into());
    header.push("valid".into());
    w.write_record(&header)?;
    for i in 0..ad.n_rows() {
        let mut rec = vec![(i + 1).to_string()];
        let ok = ad.features_valid[i];
        rec.extend(ad.x.row(i).iter().map(|v| cell(ok.then_some(*v))));
        rec.push(cell(ad.y[i].is_finite().then_some(ad.y[i])));
        rec.push(u8::from(ad.valid[i]).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const MC_COLUMNS: [&str; 7] = [
    "estimator",
    "h_m",
    "T",
    "mean_rmsfe",
    "sd",
    "n_fail",
    "dm_vs_midas_p",
];

pub fn write_mc_results(path: &Path, res: &McResults) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MC_COLUMNS)?;
    for r in &res.rows {
        w.write_record([
            r.estimator.clone(),
            r.h_m.to_string(),
            r.t.to_string(),
            num(r.mean_rmsfe),
            num(r.sd),
            r.n_fail.to_string(),
            cell(r.dm_vs_midas_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn batch_label(b: &BatchSize) -> String {
    match b {
        BatchSize::Absolute(n) => n.to_string(),
        BatchSize::Fraction(f) => format!("{f}*input"),
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_grid_scores(path: &Path, res: &GridResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epochs",
        "dropout",
        "batch",
        "cells",
        "timesteps",
        "monthly_lags",
        "quarterly_lags",
        "parameters",
        "mean_rmsfe",
        "failures",
    ])?;
    for s in &res.table {
        let c = &s.choice;
        let cells: Vec<String> = c.cells.iter().map(usize::to_string).collect();
        w.write_record([
            c.epochs.to_string(),
            c.dropout.to_string(),
            batch_label(&c.batch),
            cells.join("x"),
            opt(c.timesteps),
            opt(c.monthly_lags),
            opt(c.quarterly_lags),
            s.parameters.to_string(),
            cell(s.mean_rmsfe),
            s.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluation reports as one table with a `window` column; relative
/// RMSFE columns are named `rel_rmsfe_<model>`.
pub fn write_evaluation(path: &Path, reports: &[(&str, &EvaluationReport)]) -> Result<()> {
    let models: BTreeSet<&str> = reports
        .iter()
        .flat_map(|(_, r)| r.entries.iter().flat_map(|e| e.relative_rmsfe.keys()))
        .map(String::as_str)
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["window", "model", "h_m", "n", "rmsfe", "relative_mse"]
        .map(String::from)
        .to_vec();
    header.extend(models.iter().map(|m| format!("rel_rmsfe_{m}")));
    header.extend(["dm_statistic", "dm_p_value"].map(String::from));
    w.write_record(&header)?;
    for (window, report) in reports {
        for e in &report.entries {
            let mut rec = vec![
                window.to_string(),
                e.model.clone(),
                e.h_m.to_string(),
                e.n.to_string(),
                e.rmsfe.to_string(),
                cell(e.relative_mse),
            ];
            rec.extend(models.iter().map(|m| cell(e.relative_rmsfe.get(*m).copied())));
            rec.push(cell(e.dm_vs_benchmark.as_ref().map(|d| d.statistic)));
            rec.push(cell(e.dm_vs_benchmark.as_ref().map(|d| d.p_value)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CUMSFE plot data: `x` is the target period, `y` the running sum.
pub fn write_cumsfe(path: &Path, targets: &[usize], values: &[f64]) -> Result<()> {
    if targets.len() != values.len() {
        return Err(Error::Shape("one target per CUMSFE value required".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for (t, v) in targets.iter().zip(values) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
