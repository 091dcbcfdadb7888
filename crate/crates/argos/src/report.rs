//! Table rendering: aligned markdown and CSV views of summaries and
//! topology rows, plus the three aggregate report tables (scenario quality
//! by method, latent topology by method, and the synthesis ablation).

use crate::evalkit::{ScoreSummary, TopologyReport};
use crate::fsrsynth::Arm;
use crate::hazardgen::Method;

/// Render an aligned markdown table (columns padded to their widest cell).
pub fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let pad = |text: &str, width: usize| {
        let mut s = text.to_string();
        while s.chars().count() < width {
            s.push(' ');
        }
        s
    };
    let mut out = String::new();
    out.push('|');
    for (header, width) in headers.iter().zip(&widths) {
        out.push_str(&format!(" {} |", pad(header, *width)));
    }
    out.push('\n');
    out.push('|');
    for width in &widths {
        out.push_str(&format!("{}|", "-".repeat(width + 2)));
    }
    out.push('\n');
    for row in rows {
        out.push('|');
        for (cell, width) in row.iter().zip(&widths) {
            out.push_str(&format!(" {} |", pad(cell, *width)));
        }
        out.push('\n');
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render one CSV line (RFC-4180 quoting, no trailing newline).
pub fn csv_line(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_escape(f))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn csv_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = csv_line(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out.push('\n');
    for row in rows {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

fn mean_sd_cell(summaries: &[ScoreSummary], method: &str, metric: &str) -> String {
    summaries
        .iter()
        .find(|s| s.method == method && s.metric == metric)
        .map(|s| format!("{:.2} ± {:.2}", s.mean, s.sd))
        .unwrap_or_else(|| "—".to_string())
}

/// Methods as rows, PR/LR/FSR as "mean ± sd" columns.
pub fn scenario_quality_table(summaries: &[ScoreSummary]) -> (String, String) {
    let headers = [
        "Method",
        "Physical Reliability",
        "Long-tail Risk",
        "FSR Derivation",
    ];
    let rows: Vec<Vec<String>> = [Method::Vanilla, Method::Cot, Method::Ours]
        .iter()
        .map(|m| {
            vec![
                m.label().to_string(),
                mean_sd_cell(summaries, m.as_str(), "PR"),
                mean_sd_cell(summaries, m.as_str(), "LR"),
                mean_sd_cell(summaries, m.as_str(), "FSR"),
            ]
        })
        .collect();
    (markdown_table(&headers, &rows), csv_table(&headers, &rows))
}

fn cse_cell(report: &TopologyReport) -> String {
    match report.cse {
        Some(value) => format!("{value:.2}"),
        None => "undefined".to_string(),
    }
}

/// Methods as rows, the five topology metrics as columns.
pub fn topology_table(reports: &[TopologyReport]) -> (String, String) {
    let headers = [
        "Method",
        "Eff. Rank",
        "Shift",
        "Aligned Var.",
        "CSE",
        "Directional Similarity",
    ];
    let order = [Method::Vanilla, Method::Cot, Method::Ours];
    let mut rows = Vec::new();
    for method in order {
        if let Some(report) = reports.iter().find(|r| r.label == method.as_str()) {
            rows.push(vec![
                method.label().to_string(),
                format!("{:.2}", report.eff_rank),
                format!("{:.3}", report.shift),
                format!("{:.3}", report.aligned_var),
                cse_cell(report),
                format!("{:.3}", report.dir_sim),
            ]);
        }
    }
    (markdown_table(&headers, &rows), csv_table(&headers, &rows))
}

/// Ablation arms as rows, CC/PRC/LRC/Overall as "mean ± sd" columns.
pub fn ablation_table(summaries: &[ScoreSummary]) -> (String, String) {
    let headers = ["Method", "CC", "PRC", "LRC", "Overall"];
    let order = [Arm::Vanilla, Arm::IsoOnly, Arm::NoIso, Arm::Full];
    let rows: Vec<Vec<String>> = order
        .iter()
        .filter(|arm| summaries.iter().any(|s| s.method == arm.as_str()))
        .map(|arm| {
            vec![
                arm.label().to_string(),
                mean_sd_cell(summaries, arm.as_str(), "CC"),
                mean_sd_cell(summaries, arm.as_str(), "PRC"),
                mean_sd_cell(summaries, arm.as_str(), "LRC"),
                mean_sd_cell(summaries, arm.as_str(), "Overall"),
            ]
        })
        .collect();
    (markdown_table(&headers, &rows), csv_table(&headers, &rows))
}
