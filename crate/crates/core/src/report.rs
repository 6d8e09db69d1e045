//! Text rendering of metric reports, sweep results and pair comparisons.
//!
//! Scores are stored on `[0, 1]` and rendered on the 0-100 scale, rounded
//! half-to-even to one decimal. Null dimensions render as `-`. In
//! multi-report tables the best value of each column is suffixed `*` and the
//! second best `+`; ties share the marker.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{PairComparison, SweepResult};
use crate::model::{Dimension, MetricReport, REPORT_SCHEMA_VERSION};
use crate::numeric::round_half_even;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to render")]
    Empty,
    #[error("report {label:?} has schema version {found}, expected {expected}")]
    SchemaVersion { label: String, found: u32, expected: u32 },
    #[error("cannot read report {path}: {message}")]
    Read { path: PathBuf, message: String },
}

pub const BEST_MARK: char = '*';
pub const SECOND_MARK: char = '+';

/// A `[0, 1]` score on the 0-100 scale at one decimal.
pub fn format_score(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{:.1}", round_half_even(100.0 * v, 1)))
}

/// A 0-100 mean at one decimal.
pub fn format_mean(mean: f64) -> String {
    format!("{:.1}", round_half_even(mean, 1))
}

pub fn check_schema(report: &MetricReport) -> Result<(), ReportError> {
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(ReportError::SchemaVersion {
            label: report.label.clone(),
            found: report.schema_version,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<MetricReport, ReportError> {
    let read = |message: String| ReportError::Read {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| read(e.to_string()))?;
    let report: MetricReport = serde_json::from_str(&text).map_err(|e| read(e.to_string()))?;
    check_schema(&report)?;
    Ok(report)
}

/// Right-align every column; the first column is left-aligned.
fn layout(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                out.push_str(&format!("{cell:<w$}", w = widths[0]));
            } else {
                out.push_str(&format!("  {cell:>w$}", w = widths[c]));
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Suffix best / second-best markers onto a column of rendered numbers.
fn mark_column(cells: &mut [String]) {
    let mut distinct: Vec<f64> = cells.iter().filter_map(|c| c.parse().ok()).collect();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    for cell in cells.iter_mut() {
        let Ok(v) = cell.parse::<f64>() else { continue };
        if Some(&v) == distinct.first() {
            cell.push(BEST_MARK);
        } else if Some(&v) == distinct.get(1) {
            cell.push(SECOND_MARK);
        }
    }
}

/// One row per report: optional BLEU-1/BLEU-4/CIDEr, P and R per dimension,
/// and the mean.
pub fn render_comparison(reports: &[MetricReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    for r in reports {
        check_schema(r)?;
    }
    let with_baselines = reports.iter().any(|r| r.baselines.is_some());

    let mut header = vec!["Model".to_string()];
    if with_baselines {
        header.extend(["BLEU-1", "BLEU-4", "CIDEr"].map(String::from));
    }
    for dim in Dimension::ALL {
        header.push(format!("{} P", dim.heading()));
        header.push(format!("{} R", dim.heading()));
    }
    header.push("Mean".into());

    let mut rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone()];
            if with_baselines {
                match &r.baselines {
                    Some(b) => row.extend([b.bleu1, b.bleu4, b.cider].map(|x| format!("{x:.4}"))),
                    None => row.extend(["-", "-", "-"].map(String::from)),
                }
            }
            for dim in Dimension::ALL {
                let score = r.corpus.get(&dim).copied().flatten();
                row.push(format_score(score.map(|s| s.precision)));
                row.push(format_score(score.map(|s| s.recall)));
            }
            row.push(format_mean(r.mean));
            row
        })
        .collect();

    if rows.len() > 1 {
        for c in 1..header.len() {
            let mut column: Vec<String> = rows.iter().map(|r| r[c].clone()).collect();
            mark_column(&mut column);
            for (r, cell) in rows.iter_mut().zip(column) {
                r[c] = cell;
            }
        }
    }
    Ok(layout(&header, &rows))
}

/// Corpus P, R and F1 per dimension for a single report, plus the mean.
pub fn render_report(report: &MetricReport) -> Result<String, ReportError> {
    check_schema(report)?;
    let header: Vec<String> = ["Dimension", "P", "R", "F1"].map(String::from).to_vec();
    let mut rows: Vec<Vec<String>> = Dimension::ALL
        .iter()
        .map(|dim| {
            let s = report.corpus.get(dim).copied().flatten();
            vec![
                dim.heading().to_string(),
                format_score(s.map(|s| s.precision)),
                format_score(s.map(|s| s.recall)),
                format_score(s.map(|s| s.f1)),
            ]
        })
        .collect();
    rows.push(vec![
        "Mean".into(),
        format_mean(report.mean),
        String::new(),
        String::new(),
    ]);
    let mut out = format!("{}\n", report.label);
    out.push_str(&layout(&header, &rows));
    if let Some(b) = &report.baselines {
        out.push_str(&format!(
            "BLEU-1 {:.4}  BLEU-4 {:.4}  CIDEr {:.4}\n",
            b.bleu1, b.bleu4, b.cider
        ));
    }
    Ok(out)
}

/// Std and range rows of P, R and F1 per dimension, scaled by 10^3.
pub fn render_sweep(result: &SweepResult) -> String {
    let mut header = vec![String::new()];
    for dim in Dimension::ALL {
        for m in ["P", "R", "F1"] {
            header.push(format!("{} {m}", dim.heading()));
        }
    }
    let scaled = |x: f64| format!("{:.1}", round_half_even(1e3 * x, 1));
    let row = |name: &str, pick: fn(&crate::harness::Dispersion) -> [f64; 3]| {
        let mut r = vec![name.to_string()];
        for dim in Dimension::ALL {
            match result.dispersion.get(&dim) {
                Some(d) => r.extend(pick(d).map(scaled)),
                None => r.extend(["-", "-", "-"].map(String::from)),
            }
        }
        r
    };
    let rows = vec![
        row("Std.", |d| [d.p_std, d.r_std, d.f1_std]),
        row("Rg.", |d| [d.p_range, d.r_range, d.f1_range]),
    ];
    let mut out = String::from("Dispersion across templates (values x10^3)\n");
    out.push_str(&layout(&header, &rows));

    let mut header = vec!["Template".to_string()];
    for dim in Dimension::ALL {
        for m in ["P", "R", "F1"] {
            header.push(format!("{} {m}", dim.heading()));
        }
    }
    let rows: Vec<Vec<String>> = result
        .per_template
        .iter()
        .map(|(id, scores)| {
            let mut r = vec![id.clone()];
            for dim in Dimension::ALL {
                let s = scores.get(&dim);
                r.push(format_score(s.map(|s| s.precision)));
                r.push(format_score(s.map(|s| s.recall)));
                r.push(format_score(s.map(|s| s.f1)));
            }
            r
        })
        .collect();
    out.push('\n');
    out.push_str(&layout(&header, &rows));
    out
}

/// Per-pair baselines and cue F1, followed by the means.
pub fn render_pairs(cmp: &PairComparison) -> String {
    let header: Vec<String> = ["Pair", "Seed", "BLEU-1", "BLEU-4", "CIDEr", "EmoCue F1"]
        .map(String::from)
        .to_vec();
    let mut rows: Vec<Vec<String>> = cmp
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                p.seed.to_string(),
                format!("{:.4}", p.bleu1),
                format!("{:.4}", p.bleu4),
                format!("{:.4}", p.cider),
                format!("{:.4}", p.emocue_f1),
            ]
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        String::new(),
        format!("{:.4}", cmp.mean_bleu1),
        format!("{:.4}", cmp.mean_bleu4),
        format!("{:.4}", cmp.mean_cider),
        format!("{:.4}", cmp.mean_emocue_f1),
    ]);
    let mut out = layout(&header, &rows);
    out.push_str(if cmp.emocue_exceeds_ngram {
        "cue-level F1 exceeds every n-gram baseline on these pairs\n"
    } else {
        "cue-level F1 does not exceed the n-gram baselines on these pairs\n"
    });
    out
}
