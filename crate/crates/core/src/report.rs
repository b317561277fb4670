//! Reporters and the cross-run comparison engine.
//!
//! All reporters are pure functions of a [`RunDocument`]: the same document
//! always renders to the same bytes.
//!
//! # Plot-series format
//!
//! [`emit_plot_series`] writes tab-separated text. Lines starting with `#`
//! are comments (the first two name the format and the axis). The header row
//! is `series\tx\tmean_ns\tyerr_ns`; every following row is one point, where
//! `series` identifies the group (config label plus the benchmark identity
//! with the axis removed), `x` is the axis value, and `yerr_ns` is half the
//! width of the mean's confidence interval.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvMeta;
use crate::registry::{BenchmarkRecord, Verification};
use crate::sampling::MeasurementPlan;
use crate::stats::BootstrapEstimate;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub schema_version: String,
    pub env: EnvMeta,
    pub plan: MeasurementPlan,
    pub records: Vec<BenchmarkRecord>,
}

impl RunDocument {
    pub fn new(env: EnvMeta, plan: MeasurementPlan, records: Vec<BenchmarkRecord>) -> Self {
        RunDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            env,
            plan,
            records,
        }
    }

    pub fn label(&self) -> &str {
        &self.env.config_label
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no benchmark appears in both the baseline and a candidate")]
    NoCommonBenchmarks,
    #[error("unsupported schema version {0:?}")]
    SchemaVersion(String),
    #[error("invalid JSON document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown plot axis {0:?} (expected dtype, threads_per_team, n or config_label)")]
    UnknownAxis(String),
}

/// Time units for auto-scaled durations.
const UNITS: [(&str, f64); 4] = [("s", 1e9), ("ms", 1e6), ("us", 1e3), ("ns", 1.0)];

/// The largest unit in which `reference_ns` is at least 1.
pub fn pick_unit(reference_ns: f64) -> (&'static str, f64) {
    UNITS
        .iter()
        .copied()
        .find(|&(_, scale)| reference_ns / scale >= 1.0)
        .unwrap_or(("ns", 1.0))
}

/// `value` in the given unit with two decimals, e.g. `44.27 us`.
pub fn format_in(value_ns: f64, (unit, scale): (&str, f64)) -> String {
    format!("{:.2} {unit}", value_ns / scale)
}

/// A duration auto-scaled by its own magnitude.
pub fn format_duration(ns: f64) -> String {
    format_in(ns, pick_unit(ns))
}

/// `mean (std)` in the unit chosen by the mean, e.g. `44.27 (0.95) us`.
pub fn format_mean_std(mean_ns: f64, std_ns: f64) -> String {
    let (unit, scale) = pick_unit(mean_ns);
    format!("{:.2} ({:.2}) {unit}", mean_ns / scale, std_ns / scale)
}

#[derive(Clone, Copy)]
enum Align {
    Left,
    Right,
}

fn render_table(header: &[&str], align: &[Align], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(widths.iter().zip(align))
            .map(|(c, (&w, a))| match a {
                Align::Left => format!("{c:<w$}"),
                Align::Right => format!("{c:>w$}"),
            })
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&line(&mut header.iter().copied()));
    out.push('\n');
    let sep: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&sep.join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

pub const TABULAR_COLUMNS: [&str; 7] = [
    "name",
    "mean (stddev)",
    "mean_lo",
    "mean_hi",
    "stddev_lo",
    "stddev_hi",
    "verify",
];

/// Fixed-width table, one row per record. Each row's durations share the
/// unit picked by its mean. Verification failure messages follow the table.
pub fn render_tabular(doc: &RunDocument) -> String {
    use Align::*;
    let rows: Vec<Vec<String>> = doc
        .records
        .iter()
        .map(|r| {
            let unit = pick_unit(r.stats.mean.point);
            let (m, s) = (&r.stats.mean, &r.stats.std_dev);
            let mut row = vec![r.name.clone(), format_mean_std(m.point, s.point)];
            row.extend([m.lower, m.upper, s.lower, s.upper].map(|v| format_in(v, unit)));
            row.push(r.verification.label().to_string());
            row
        })
        .collect();
    let mut out = render_table(
        &TABULAR_COLUMNS,
        &[Left, Right, Right, Right, Right, Right, Left],
        &rows,
    );
    let failures: Vec<_> = doc
        .records
        .iter()
        .filter_map(|r| match &r.verification {
            Verification::Fail(msg) => Some((&r.name, msg)),
            _ => None,
        })
        .collect();
    if !failures.is_empty() {
        out.push_str("\nverification failures:\n");
        for (name, msg) in failures {
            let _ = writeln!(out, "  {name}: {msg}");
        }
    }
    out
}

pub fn render_json(doc: &RunDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("run documents always serialize");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<RunDocument, ReportError> {
    let doc: RunDocument = serde_json::from_str(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ReportError::SchemaVersion(doc.schema_version));
    }
    Ok(doc)
}

pub const CSV_COLUMNS: [&str; 19] = [
    "name",
    "mean",
    "mean_lo",
    "mean_hi",
    "stddev",
    "stddev_lo",
    "stddev_hi",
    "verify",
    "family",
    "dtype",
    "n",
    "teams",
    "threads_per_team",
    "seed",
    "config_label",
    "iterations_per_sample",
    "samples",
    "resamples",
    "confidence",
];

/// One row per record. Durations are nanoseconds at full precision.
pub fn render_csv(doc: &RunDocument) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &doc.records {
        let (m, s, c) = (&r.stats.mean, &r.stats.std_dev, &r.config);
        w.write_record([
            r.name.clone(),
            m.point.to_string(),
            m.lower.to_string(),
            m.upper.to_string(),
            s.point.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
            r.verification.label().to_lowercase(),
            r.family.clone(),
            c.dtype.to_string(),
            c.n.to_string(),
            c.teams.to_string(),
            c.threads_per_team.to_string(),
            c.seed.to_string(),
            r.env.config_label.clone(),
            r.iterations_per_sample.to_string(),
            r.stats.sample_count.to_string(),
            r.stats.resample_count.to_string(),
            r.plan_used.confidence.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub candidate_std_dev: f64,
    /// `baseline_mean / candidate_mean`; above 1 means the candidate is faster.
    pub speedup: f64,
    /// Whether the two mean confidence intervals intersect.
    pub ci_overlap: bool,
}

impl ComparisonCell {
    pub fn new(baseline: &BootstrapEstimate, candidate: &BootstrapEstimate, candidate_std_dev: f64) -> Self {
        ComparisonCell {
            baseline_mean: baseline.point,
            candidate_mean: candidate.point,
            candidate_std_dev,
            speedup: baseline.point / candidate.point,
            ci_overlap: baseline.overlaps(candidate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub baseline: Option<BaselineSummary>,
    /// One entry per candidate, in candidate order.
    pub cells: Vec<Option<ComparisonCell>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub name: String,
    pub missing_from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub baseline_label: String,
    pub candidate_labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// Benchmarks absent from some document.
    pub gaps: Vec<Gap>,
}

/// Joins records by benchmark name. Rows keep the baseline's order followed
/// by names that only candidates have; every missing pairing is listed in
/// `gaps`.
pub fn compare(baseline: &RunDocument, candidates: &[RunDocument]) -> Result<ComparisonMatrix, ReportError> {
    let find = |doc: &RunDocument, name: &str| doc.records.iter().find(|r| r.name == name).cloned();

    let mut names: Vec<String> = Vec::new();
    for doc in std::iter::once(baseline).chain(candidates) {
        for r in &doc.records {
            if !names.contains(&r.name) {
                names.push(r.name.clone());
            }
        }
    }

    let mut rows = Vec::with_capacity(names.len());
    let mut gaps = Vec::new();
    let mut common = false;
    for name in names {
        let base = find(baseline, &name);
        if base.is_none() {
            gaps.push(Gap {
                name: name.clone(),
                missing_from: baseline.label().to_string(),
            });
        }
        let cells = candidates
            .iter()
            .map(|doc| match (&base, find(doc, &name)) {
                (Some(b), Some(c)) => {
                    common = true;
                    Some(ComparisonCell::new(&b.stats.mean, &c.stats.mean, c.stats.std_dev.point))
                }
                (_, None) => {
                    gaps.push(Gap {
                        name: name.clone(),
                        missing_from: doc.label().to_string(),
                    });
                    None
                }
                (None, Some(_)) => None,
            })
            .collect();
        rows.push(ComparisonRow {
            name,
            baseline: base.map(|b| BaselineSummary {
                mean: b.stats.mean.point,
                std_dev: b.stats.std_dev.point,
            }),
            cells,
        });
    }
    if !common {
        return Err(ReportError::NoCommonBenchmarks);
    }
    Ok(ComparisonMatrix {
        baseline_label: baseline.label().to_string(),
        candidate_labels: candidates.iter().map(|d| d.label().to_string()).collect(),
        rows,
        gaps,
    })
}

/// Text matrix with `mean (std)` cells; candidate cells add the speedup over
/// the baseline, marked `~` when the confidence intervals overlap.
pub fn render_comparison(m: &ComparisonMatrix) -> String {
    let mut header = vec!["benchmark".to_string(), format!("{} (baseline)", m.baseline_label)];
    header.extend(m.candidate_labels.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut align = vec![Align::Left];
    align.extend(std::iter::repeat(Align::Right).take(header.len() - 1));

    let rows: Vec<Vec<String>> = m
        .rows
        .iter()
        .map(|row| {
            let reference = row
                .baseline
                .map(|b| b.mean)
                .or_else(|| row.cells.iter().flatten().map(|c| c.candidate_mean).next())
                .unwrap_or(1.0);
            let (unit, scale) = pick_unit(reference);
            let ms = |mean: f64, std: f64| format!("{:.2} ({:.2}) {unit}", mean / scale, std / scale);
            let mut cells = vec![row.name.clone()];
            cells.push(row.baseline.map_or("-".to_string(), |b| ms(b.mean, b.std_dev)));
            for cell in &row.cells {
                cells.push(cell.map_or("-".to_string(), |c| {
                    let mark = if c.ci_overlap { "~" } else { "" };
                    format!("{} x{:.2}{mark}", ms(c.candidate_mean, c.candidate_std_dev), c.speedup)
                }));
            }
            cells
        })
        .collect();
    let mut out = render_table(&header_refs, &align, &rows);
    if !m.gaps.is_empty() {
        out.push_str("\nmissing benchmarks:\n");
        for g in &m.gaps {
            let _ = writeln!(out, "  {} not in {}", g.name, g.missing_from);
        }
    }
    out
}

pub fn render_comparison_json(m: &ComparisonMatrix) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("comparison matrices always serialize");
    s.push('\n');
    s
}

/// One row per (benchmark, candidate) pair with a computed cell.
pub fn render_comparison_csv(m: &ComparisonMatrix) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "baseline",
        "candidate",
        "baseline_mean",
        "candidate_mean",
        "speedup",
        "ci_overlap",
    ])?;
    for row in &m.rows {
        for (label, cell) in m.candidate_labels.iter().zip(&row.cells) {
            if let Some(c) = cell {
                w.write_record([
                    row.name.clone(),
                    m.baseline_label.clone(),
                    label.clone(),
                    c.baseline_mean.to_string(),
                    c.candidate_mean.to_string(),
                    c.speedup.to_string(),
                    c.ci_overlap.to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// One kernel of a framework-vs-naive validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub kernel: String,
    pub framework_mean_ns: f64,
    pub naive_mean_ns: f64,
    pub percent_deviation: f64,
}

pub fn render_validation(rows: &[ValidationRow]) -> String {
    use Align::*;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kernel.clone(),
                format_duration(r.framework_mean_ns),
                format_duration(r.naive_mean_ns),
                format!("{:.3}%", r.percent_deviation),
            ]
        })
        .collect();
    render_table(
        &["kernel", "framework mean", "naive mean", "deviation"],
        &[Left, Right, Right, Right],
        &cells,
    )
}

pub fn render_validation_json(rows: &[ValidationRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("validation rows always serialize");
    s.push('\n');
    s
}

pub fn render_validation_csv(rows: &[ValidationRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotAxis {
    DType,
    ThreadsPerTeam,
    N,
    ConfigLabel,
}

impl PlotAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            PlotAxis::DType => "dtype",
            PlotAxis::ThreadsPerTeam => "threads_per_team",
            PlotAxis::N => "n",
            PlotAxis::ConfigLabel => "config_label",
        }
    }
}

impl FromStr for PlotAxis {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dtype" => Ok(PlotAxis::DType),
            "threads_per_team" | "tpb" => Ok(PlotAxis::ThreadsPerTeam),
            "n" => Ok(PlotAxis::N),
            "config_label" | "label" => Ok(PlotAxis::ConfigLabel),
            other => Err(ReportError::UnknownAxis(other.to_string())),
        }
    }
}

fn series_point(r: &BenchmarkRecord, label: &str, axis: PlotAxis) -> (String, String) {
    let c = &r.config;
    // Teams follow n and threads-per-team, so they leave the key with either.
    match axis {
        PlotAxis::DType => (
            format!(
                "{label}:{}/n={}/teams={}/tpb={}",
                r.family, c.n, c.teams, c.threads_per_team
            ),
            c.dtype.to_string(),
        ),
        PlotAxis::ThreadsPerTeam => (
            format!("{label}:{}/{}/n={}", r.family, c.dtype, c.n),
            c.threads_per_team.to_string(),
        ),
        PlotAxis::N => (
            format!("{label}:{}/{}/tpb={}", r.family, c.dtype, c.threads_per_team),
            c.n.to_string(),
        ),
        PlotAxis::ConfigLabel => (r.name.clone(), label.to_string()),
    }
}

type SeriesPoint = (String, f64, f64);

/// Grouped series over `axis` in the tab-separated format described in the
/// module docs. Series appear in order of first occurrence.
pub fn emit_plot_series(docs: &[RunDocument], axis: PlotAxis) -> String {
    let mut series: Vec<(String, Vec<SeriesPoint>)> = Vec::new();
    for doc in docs {
        for r in &doc.records {
            let (key, x) = series_point(r, doc.label(), axis);
            let point = (x, r.stats.mean.point, r.stats.mean.half_width());
            match series.iter_mut().find(|(k, _)| *k == key) {
                Some((_, points)) => points.push(point),
                None => series.push((key, vec![point])),
            }
        }
    }
    let mut out = String::new();
    out.push_str("# bootbench plot series v1\n");
    let _ = writeln!(out, "# axis={}", axis.as_str());
    out.push_str("series\tx\tmean_ns\tyerr_ns\n");
    for (key, points) in &series {
        for (x, y, yerr) in points {
            let _ = writeln!(out, "{key}\t{x}\t{y}\t{yerr}");
        }
    }
    out
}
