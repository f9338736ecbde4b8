//! Sweep report emission.

use std::fmt::Write as _;
use std::path::Path;

use activereg_core::sampler::Strategy;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::sweep::{strategy_name, SweepReport, SweepRow};

pub const ROW_COLUMNS: [&str; 6] = [
    "setting",
    "selected_mean",
    "selected_std",
    "rmse_mean",
    "rmse_std",
    "seeds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(BenchError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Markdown => "markdown",
        })
    }
}

fn csv_row(row: &SweepRow) -> [String; 6] {
    [
        row.setting.clone(),
        row.selected_mean.to_string(),
        row.selected_std.to_string(),
        row.rmse_mean.to_string(),
        row.rmse_std.to_string(),
        row.seeds.to_string(),
    ]
}

pub fn render_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROW_COLUMNS)?;
    for row in &report.rows {
        w.write_record(csv_row(row))?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// A pipe table with one line per row, values shown as `mean (± std)`.
pub fn render_markdown(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str("| setting | selected | selected std | RMSE | RMSE std | seeds |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "| {} | {:.1} | {:.3} | {:.4} | {:.4} | {} |",
            r.setting, r.selected_mean, r.selected_std, r.rmse_mean, r.rmse_std, r.seeds
        );
    }
    let failed: Vec<_> = report.failed_cells().collect();
    if !failed.is_empty() {
        out.push_str("\nFailed cells:\n\n");
        for c in failed {
            let _ = writeln!(
                out,
                "- {} seed {}: {}",
                c.setting,
                c.seed,
                c.error.as_deref().unwrap_or("")
            );
        }
    }
    out
}

pub fn render(report: &SweepReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

pub fn emit_report(report: &SweepReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render(report, format)?)?;
    Ok(())
}

/// `k, strategy, rmse_mean, rmse_std` for every BSS and uniform row of a k-sweep.
pub fn render_plot_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "strategy", "rmse_mean", "rmse_std"])?;
    for r in &report.rows {
        let (Some(k), Some(strategy)) = (r.draws_mean, r.strategy) else {
            continue;
        };
        w.write_record([
            (k.round() as u64).to_string(),
            strategy_name(strategy).to_string(),
            r.rmse_mean.to_string(),
            r.rmse_std.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_plot_csv(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_plot_csv(report)?)?;
    Ok(())
}

pub fn read_json_report(path: impl AsRef<Path>) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Rows of one strategy, in report order.
pub fn rows_for(report: &SweepReport, strategy: Strategy) -> Vec<&SweepRow> {
    report.rows.iter().filter(|r| r.strategy == Some(strategy)).collect()
}
