//! Optimality gaps, aggregate statistics and report files.
//!
//! Across-instance spreads use the sample standard deviation (denominator
//! `k - 1`), so a single contributing value has an undefined (`NaN`) spread
//! and no values give `NaN ± NaN`. Within-population diversity uses the
//! population variance (denominator `N`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{RunRecord, StrategyKind};
use crate::error::{validation, Error, Result};
use crate::tsp::Family;

/// Relative tolerance under which a found length counts as optimal.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

/// `(found - optimal) / optimal`, clamped at zero.
///
/// A `found` shorter than `optimal` by more than the tolerance means the
/// optimum is wrong and is reported as a consistency error.
pub fn optimality_gap(found: f64, optimal: f64) -> Result<f64> {
    if !(optimal > 0.0 && optimal.is_finite()) {
        return Err(validation(format!("optimal length must be positive, got {optimal}")));
    }
    if !found.is_finite() {
        return Err(validation(format!("found length must be finite, got {found}")));
    }
    if found < optimal - OPTIMALITY_TOLERANCE * optimal {
        return Err(Error::Consistency(format!("found length {found} is shorter than the optimum {optimal}")));
    }
    Ok(((found - optimal) / optimal).max(0.0))
}

/// Mean with its sample standard deviation; either may be `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub const UNDEFINED: MeanStd = MeanStd { mean: f64::NAN, std: f64::NAN };

    /// `NaN ± NaN` for no values, `x ± NaN` for one.
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self::UNDEFINED;
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Self { mean, std: f64::NAN };
        }
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self { mean, std: (ss / (k - 1) as f64).sqrt() }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self { mean: self.mean * factor, std: self.std * factor }
    }

    /// `%.2f ± %.2f`, with literal `NaN` for undefined parts.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Mean gap over a cell's instances with its sample standard deviation.
pub fn mean_gap(gaps: &[f64]) -> Result<MeanStd> {
    if gaps.is_empty() {
        return Err(validation("mean_gap needs at least one gap"));
    }
    Ok(MeanStd::of(gaps))
}

/// Statistics over the runs that reached the optimum.
pub fn success_step_stats(records: &[RunRecord]) -> MeanStd {
    let steps: Vec<Option<usize>> = records.iter().map(|r| r.success_step).collect();
    success_stats(&steps)
}

pub fn success_stats(steps: &[Option<usize>]) -> MeanStd {
    let hits: Vec<f64> = steps.iter().flatten().map(|&s| s as f64).collect();
    MeanStd::of(&hits)
}

/// Population variance (denominator `N`) of tour lengths.
pub fn population_variance(lengths: &[f64]) -> Result<f64> {
    if lengths.is_empty() {
        return Err(validation("population_variance needs at least one length"));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    Ok(lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n)
}

/// One table cell group: a problem type run under one strategy and model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub family: Family,
    pub n: usize,
    pub strategy: StrategyKind,
    pub model: String,
}

impl CellKey {
    pub fn problem(&self) -> String {
        format!("{}-{}", self.family, self.n)
    }

    pub fn column(&self) -> String {
        format!("{} ({})", self.strategy, self.model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    /// Fractions, not percent.
    pub gap: MeanStd,
    pub success: MeanStd,
    pub runs: usize,
    pub run_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
}

impl ExperimentSummary {
    pub fn cell(&self, key: &CellKey) -> Option<&CellSummary> {
        self.cells.iter().find(|c| &c.key == key)
    }
}

/// Aggregates finished runs into cells.
///
/// A run's gap is taken at its best tour. Runs of the same instance are
/// averaged first, so every instance contributes one gap to its cell.
/// `expected` lists cells that must appear even without runs. Runs without a
/// known optimum or that did not complete are left out.
pub fn summarize(records: &[RunRecord], expected: &[CellKey]) -> Result<ExperimentSummary> {
    let mut groups: BTreeMap<CellKey, Vec<&RunRecord>> = expected.iter().cloned().map(|k| (k, Vec::new())).collect();
    for r in records {
        if !r.completed {
            log::warn!("run {} did not complete; left out of the summary", r.run_id);
            continue;
        }
        if r.optimal_length.is_none() {
            log::warn!("run {} has no known optimum; left out of the summary", r.run_id);
            continue;
        }
        groups.entry(r.cell_key()).or_default().push(r);
    }

    let mut cells = Vec::with_capacity(groups.len());
    for (key, runs) in groups {
        let mut per_instance: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            let optimal = r.optimal_length.expect("filtered above");
            per_instance.entry(r.instance_id.as_str()).or_default().push(optimality_gap(r.best.length(), optimal)?);
        }
        let instance_gaps: Vec<f64> = per_instance.values().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let gap = if instance_gaps.is_empty() { MeanStd::UNDEFINED } else { mean_gap(&instance_gaps)? };
        let steps: Vec<Option<usize>> = runs.iter().map(|r| r.success_step).collect();
        let mut run_ids: Vec<String> = runs.iter().map(|r| r.run_id.clone()).collect();
        run_ids.sort();
        cells.push(CellSummary { key, gap, success: success_stats(&steps), runs: runs.len(), run_ids });
    }
    Ok(ExperimentSummary { cells })
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ReportError { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| ReportError { path: path.to_path_buf(), source })
}

/// Markdown table: one row per problem, gap and success columns per strategy.
pub fn render_table(summary: &ExperimentSummary) -> String {
    let rows: BTreeSet<(Family, usize)> = summary.cells.iter().map(|c| (c.key.family, c.key.n)).collect();
    let columns: BTreeSet<(StrategyKind, String)> =
        summary.cells.iter().map(|c| (c.key.strategy, c.key.model.clone())).collect();

    let mut out = String::new();
    out.push_str("| Problem |");
    for (s, m) in &columns {
        let _ = write!(out, " Gap % {s} ({m}) |");
    }
    for (s, m) in &columns {
        let _ = write!(out, " Success step {s} ({m}) |");
    }
    out.push_str("\n|---|");
    for _ in 0..columns.len() * 2 {
        out.push_str("---|");
    }
    out.push('\n');
    for (family, n) in &rows {
        let _ = write!(out, "| {family}-{n} |");
        let lookup = |s: &StrategyKind, m: &String| {
            summary.cell(&CellKey { family: *family, n: *n, strategy: *s, model: m.clone() })
        };
        for (s, m) in &columns {
            let cell = lookup(s, m).map(|c| c.gap.scaled(100.0)).unwrap_or(MeanStd::UNDEFINED);
            let _ = write!(out, " {} |", cell.display());
        }
        for (s, m) in &columns {
            let cell = lookup(s, m).map(|c| c.success).unwrap_or(MeanStd::UNDEFINED);
            let _ = write!(out, " {} |", cell.display());
        }
        out.push('\n');
    }
    out
}

/// Comma-separated summary with stable column names.
pub fn render_summary_csv(summary: &ExperimentSummary) -> String {
    let mut out =
        String::from("family,n,strategy,model,gap_mean_pct,gap_std_pct,success_mean,success_std,runs,run_ids\n");
    for c in &summary.cells {
        let gap = c.gap.scaled(100.0);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.key.family,
            c.key.n,
            c.key.strategy,
            c.key.model,
            gap.mean,
            gap.std,
            c.success.mean,
            c.success.std,
            c.runs,
            c.run_ids.join(";")
        );
    }
    out
}

/// `generation,gap_pct` per generation; `None` without a known optimum.
pub fn render_convergence_trace(record: &RunRecord) -> Result<Option<String>> {
    let Some(optimal) = record.optimal_length else { return Ok(None) };
    let mut out = String::from("generation,gap_pct\n");
    for g in &record.generations {
        let gap = optimality_gap(g.best_length, optimal)? * 100.0;
        let _ = writeln!(out, "{},{}", g.generation, gap);
    }
    Ok(Some(out))
}

/// `generation,variance` per generation.
pub fn render_diversity_trace(record: &RunRecord) -> String {
    let mut out = String::from("generation,variance\n");
    for g in &record.generations {
        let _ = writeln!(out, "{},{}", g.generation, g.variance);
    }
    out
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    Io(#[from] ReportError),
    #[error(transparent)]
    Metrics(#[from] Error),
}

/// Writes `table.md`, `summary.csv` and per-run traces under `out_dir`.
///
/// Returns the written paths in a fixed order. Output depends only on the
/// inputs, so repeated calls produce identical files.
pub fn emit_reports(
    summary: &ExperimentSummary,
    records: &[RunRecord],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EmitError> {
    let mut written = Vec::new();
    let table = out_dir.join("table.md");
    write_file(&table, &render_table(summary))?;
    written.push(table);
    let csv = out_dir.join("summary.csv");
    write_file(&csv, &render_summary_csv(summary))?;
    written.push(csv);

    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    for r in sorted {
        if let Some(trace) = render_convergence_trace(r)? {
            let path = out_dir.join("traces").join(format!("{}.convergence.csv", r.run_id));
            write_file(&path, &trace)?;
            written.push(path);
        }
        let path = out_dir.join("traces").join(format!("{}.diversity.csv", r.run_id));
        write_file(&path, &render_diversity_trace(r))?;
        written.push(path);
    }
    Ok(written)
}
