//! Renders metric output as table shapes and plot-ready CSV series.
//!
//! CSV is the plot interchange format; column order is fixed. Markdown and
//! CSV carry identical numeric content.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::{rank_deltas, GuidabilityTable, MetricReport, PositionTable, RankDelta};
use crate::model::RunDir;

#[derive(Debug, Error)]
pub enum ReporterError {
    #[error("grouping key missing from base metrics: {0}")]
    KeyMismatch(String),
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Fraction in [0,1] rendered as a percentage with one decimal. Rust's float
/// formatter rounds ties to even.
pub fn format_percent(value01: f64) -> String {
    format!("{:.1}", value01 * 100.0)
}

fn format_delta(delta: i64) -> String {
    format!("{delta:+}")
}

fn cell_with_delta(value: Option<f64>, delta: Option<i64>) -> String {
    match value {
        None => "N/A".to_string(),
        Some(v) => match delta {
            Some(d) => format!("{} [{}]", format_percent(v), format_delta(d)),
            None => format_percent(v),
        },
    }
}

const SUBSETS: [&str; 2] = ["shared", "individual"];

fn deltas_for<'a>(
    report: &MetricReport,
    column: impl Fn(&crate::metrics::ModelMetrics) -> Option<f64> + 'a,
) -> BTreeMap<String, RankDelta> {
    let mut bench = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (model, metrics) in &report.models {
        if let (Some(b), Some(t)) = (metrics.benchmark_avg, column(metrics)) {
            bench.insert(model.clone(), b);
            test.insert(model.clone(), t);
        }
    }
    match rank_deltas(&bench, &test) {
        Ok(deltas) => deltas.into_iter().map(|d| (d.model.clone(), d)).collect(),
        Err(_) => BTreeMap::new(),
    }
}

/// Main table: one row per model with benchmark average, twin-test scores per
/// subset, and rank-delta subscripts relative to the benchmark ranking.
pub fn render_main_table(report: &MetricReport) -> (String, String) {
    let recov = |subset: &'static str| {
        deltas_for(report, move |m| m.recoverability.get(subset).map(|t| t.avg.value))
    };
    let guid = |subset: &'static str| {
        deltas_for(report, move |m| m.guidability.get(subset).map(|t| t.avg.value))
    };
    let recov_deltas: BTreeMap<&str, BTreeMap<String, RankDelta>> =
        SUBSETS.iter().map(|s| (*s, recov(s))).collect();
    let guid_deltas: BTreeMap<&str, BTreeMap<String, RankDelta>> =
        SUBSETS.iter().map(|s| (*s, guid(s))).collect();

    let mut md = String::new();
    md.push_str(&format!("Run: {}  \nManifest hash: {}\n\n", report.run_id, report.manifest_hash));
    md.push_str("| Model | Benchmark Avg | Recov Sh. | Recov Ind. | Guid Sh. | Guid Ind. |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    let mut csv = String::from(
        "model,benchmark_avg,recov_shared,recov_shared_delta,recov_individual,recov_individual_delta,guid_shared,guid_shared_delta,guid_individual,guid_individual_delta\n",
    );
    for (model, metrics) in &report.models {
        let bench = metrics.benchmark_avg.map(format_percent).unwrap_or_else(|| "N/A".into());
        let mut md_cells = Vec::new();
        let mut csv_cells = Vec::new();
        for (tables, deltas) in [
            (
                SUBSETS.map(|s| metrics.recoverability.get(s).map(|t| t.avg.value)),
                &recov_deltas,
            ),
            (SUBSETS.map(|s| metrics.guidability.get(s).map(|t| t.avg.value)), &guid_deltas),
        ] {
            for (subset, value) in SUBSETS.iter().zip(tables) {
                let delta = deltas.get(subset).and_then(|d| d.get(model)).map(|d| d.delta);
                md_cells.push(cell_with_delta(value, delta));
                csv_cells.push(value.map(format_percent).unwrap_or_else(|| "N/A".into()));
                csv_cells.push(delta.map(format_delta).unwrap_or_else(|| "N/A".into()));
            }
        }
        md.push_str(&format!("| {model} | {bench} | {} |\n", md_cells.join(" | ")));
        csv.push_str(&format!("{model},{bench},{}\n", csv_cells.join(",")));
    }
    (md, csv)
}

/// Position series: one row per (model, subset, position).
pub fn render_position_series(report: &MetricReport) -> String {
    let mut csv = String::from("model,subset,position,value\n");
    for (model, metrics) in &report.models {
        for (subset, table) in &metrics.recoverability {
            for cell in &table.positions {
                let position = cell.grouping.position_or_n.unwrap_or_default();
                csv.push_str(&format!("{model},{subset},{position},{}\n", format_percent(cell.value)));
            }
        }
    }
    csv
}

/// Guidability series: per-n scores and contains-answer fractions.
pub fn render_guidability_series(report: &MetricReport) -> String {
    let mut csv = String::from("model,subset,n,value,ans_fraction\n");
    for (model, metrics) in &report.models {
        for (subset, table) in &metrics.guidability {
            for (cell, ans) in table.by_n.iter().zip(&table.ans_by_n) {
                let n = cell.grouping.position_or_n.unwrap_or_default();
                csv.push_str(&format!(
                    "{model},{subset},{n},{},{}\n",
                    format_percent(cell.value),
                    format_percent(ans.value)
                ));
            }
        }
    }
    csv
}

fn signed_percent_diff(ablation: f64, base: f64) -> String {
    format!("{:+.1}", (ablation - base) * 100.0)
}

/// Ablation table: each cell shows the ablation value with a signed subscript
/// equal to (ablation - base) in percentage points.
pub fn render_ablation_diff(base: &MetricReport, ablation: &MetricReport) -> Result<String, ReporterError> {
    let mut md = String::new();
    md.push_str(&format!(
        "Ablation manifest hash: {}  \nBase manifest hash: {}\n\n",
        ablation.manifest_hash, base.manifest_hash
    ));
    md.push_str("| Model | Subset | Position | Value |\n|---|---|---|---|\n");
    for (model, metrics) in &ablation.models {
        let base_model = base
            .models
            .get(model)
            .ok_or_else(|| ReporterError::KeyMismatch(format!("model {model}")))?;
        for (subset, table) in &metrics.recoverability {
            let base_table: &PositionTable = base_model
                .recoverability
                .get(subset)
                .ok_or_else(|| ReporterError::KeyMismatch(format!("{model}/{subset}")))?;
            for cell in &table.positions {
                let position = cell.grouping.position_or_n.unwrap_or_default();
                let base_cell = base_table
                    .positions
                    .iter()
                    .find(|c| c.grouping.position_or_n == cell.grouping.position_or_n)
                    .ok_or_else(|| {
                        ReporterError::KeyMismatch(format!("{model}/{subset}/position {position}"))
                    })?;
                md.push_str(&format!(
                    "| {model} | {subset} | {position} | {} [{}] |\n",
                    format_percent(cell.value),
                    signed_percent_diff(cell.value, base_cell.value)
                ));
            }
            md.push_str(&format!(
                "| {model} | {subset} | Avg | {} [{}] |\n",
                format_percent(table.avg.value),
                signed_percent_diff(table.avg.value, base_table.avg.value)
            ));
        }
    }
    Ok(md)
}

fn write(path: PathBuf, content: &str) -> Result<PathBuf, ReporterError> {
    std::fs::write(&path, content).map_err(|e| ReporterError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

/// Render every report artifact into `reports/`.
pub fn write_reports(
    run: &RunDir,
    report: &MetricReport,
    ablation_base: Option<&MetricReport>,
) -> Result<Vec<PathBuf>, ReporterError> {
    let dir = run.reports_dir();
    std::fs::create_dir_all(&dir).map_err(|e| ReporterError::Io { path: dir.clone(), source: e })?;
    let (md, csv) = render_main_table(report);
    let mut written = vec![
        write(dir.join("main.md"), &md)?,
        write(dir.join("main.csv"), &csv)?,
        write(dir.join("positions.csv"), &render_position_series(report))?,
        write(dir.join("guidability.csv"), &render_guidability_series(report))?,
    ];
    if let Some(base) = ablation_base {
        let ablation_md = render_ablation_diff(base, report)?;
        written.push(write(dir.join("ablation.md"), &ablation_md)?);
    }
    Ok(written)
}

/// Convenience for tests: pull the shared-subset average for one model.
pub fn guidability_summary(table: &GuidabilityTable) -> (f64, f64, f64) {
    (table.avg.value, table.ans_overall.value, table.delta_pp)
}
