//! Per-subtask result tables and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::RunResult;
use super::OrchestratorError;
use crate::adjudicator::{csv_field, MetricsReport};
use crate::dataset::Subtask;
use crate::prompt::StrategyKind;

/// Row label; prefixed with the provider when a subtask mixes providers.
fn row_label(result: &RunResult, multi_provider: bool) -> String {
    let label = result.spec().strategy.label();
    if multi_provider {
        format!("[{}] {label}", result.spec().provider)
    } else {
        label
    }
}

fn ordered(results: &[RunResult]) -> BTreeMap<Subtask, Vec<&RunResult>> {
    let mut by_subtask: BTreeMap<Subtask, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        by_subtask.entry(r.spec().subtask).or_default().push(r);
    }
    for rows in by_subtask.values_mut() {
        rows.sort_by(|a, b| {
            (a.spec().strategy, &a.spec().provider, &a.run_id).cmp(&(b.spec().strategy, &b.spec().provider, &b.run_id))
        });
    }
    by_subtask
}

pub fn results_csv(rows: &[&RunResult]) -> String {
    let multi = has_multiple_providers(rows);
    let mut out = String::from("Strategy");
    for c in MetricsReport::COLUMNS {
        out.push(',');
        out.push_str(&csv_field(c));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&csv_field(&row_label(r, multi)));
        for cell in r.metrics.rendered() {
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

pub fn results_markdown(subtask: Subtask, rows: &[&RunResult]) -> String {
    let multi = has_multiple_providers(rows);
    let mut out = String::new();
    let _ = writeln!(out, "## {subtask} puzzles\n");
    let _ = writeln!(out, "| Strategy | {} |", MetricsReport::COLUMNS.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(MetricsReport::COLUMNS.len()));
    for r in rows {
        let _ = writeln!(out, "| {} | {} |", row_label(r, multi), r.metrics.rendered().join(" | "));
    }
    if rows.iter().any(|r| r.manifest.reconstructed_template) {
        let _ = writeln!(
            out,
            "\nDirect Prompt rows use a reconstructed template (`{}`).",
            crate::prompt::DIRECT_TEMPLATE_VERSION
        );
    }
    let excluded: u64 = rows.iter().map(|r| r.metrics.excluded_from_ori_sem_con).max().unwrap_or(0);
    if excluded > 0 {
        let _ = writeln!(out, "\n{excluded} incomplete group(s) excluded from the group columns.");
    }
    out
}

/// Long format: one line per (row, column) for plotting score against shots.
pub fn plot_csv(rows: &[&RunResult]) -> String {
    let multi = has_multiple_providers(rows);
    let mut out = String::from("provider,family,shots,column,value\n");
    for r in rows {
        let strategy = r.spec().strategy;
        let shots = match strategy.kind {
            StrategyKind::FewShot => strategy.shots,
            _ => 0,
        };
        let provider = if multi { r.spec().provider.as_str() } else { "" };
        for (column, cell) in MetricsReport::COLUMNS.iter().zip(r.metrics.rendered()) {
            let _ = writeln!(
                out,
                "{},{},{shots},{},{cell}",
                csv_field(provider),
                csv_field(&strategy.family_label()),
                csv_field(column)
            );
        }
    }
    out
}

fn has_multiple_providers(rows: &[&RunResult]) -> bool {
    rows.windows(2).any(|w| w[0].spec().provider != w[1].spec().provider)
}

/// Writes `<subtask>_results.{csv,md}` and `<subtask>_plot.csv` into `out_dir`; returns the paths written.
pub fn emit_report(results: &[RunResult], out_dir: &Path) -> Result<Vec<PathBuf>, OrchestratorError> {
    if results.is_empty() {
        return Err(OrchestratorError::EmptyResults);
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (subtask, rows) in ordered(results) {
        for (name, body) in [
            (format!("{subtask}_results.csv"), results_csv(&rows)),
            (format!("{subtask}_results.md"), results_markdown(subtask, &rows)),
            (format!("{subtask}_plot.csv"), plot_csv(&rows)),
        ] {
            let path = out_dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
