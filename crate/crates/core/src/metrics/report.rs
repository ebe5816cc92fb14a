//! Accuracy / calibration tables and their tab-separated machine form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ExperimentMatrix;

pub const TSV_HEADER: &str =
    "experiment\tmodel\titeration\tlabeled_size\taccuracy\tavg_max_prob\tcalibration_error\tpseudo_label_precision";

pub const ENSEMBLE_ROW: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub iteration: usize,
    pub labeled_size: usize,
    pub accuracy: f64,
    pub avg_max_prob: f64,
    pub calibration_error: f64,
    /// Set on the row of the model that produced the pseudo-labels.
    pub pseudo_label_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub rows: Vec<ReportRow>,
}

/// Flattens a matrix into one row per (experiment, model, iteration), in
/// block order, then member order, then iteration.
pub fn report_rows(matrix: &ExperimentMatrix) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for block in &matrix.blocks {
        let experiment = block.mode.label().to_string();
        for chain in &block.chains {
            let Some(first) = chain.first() else { continue };
            for (j, name) in first.model_names.iter().enumerate() {
                for r in chain {
                    let m = &r.per_model_metrics[j];
                    rows.push(ReportRow {
                        experiment: experiment.clone(),
                        model: name.clone(),
                        iteration: r.iteration,
                        labeled_size: r.labeled_size,
                        accuracy: m.accuracy,
                        avg_max_prob: m.avg_max_prob,
                        calibration_error: m.calibration_error,
                        pseudo_label_precision: if block.mode.is_ensemble() { None } else { r.pseudo_label_precision },
                    });
                }
            }
            if block.mode.is_ensemble() {
                for r in chain {
                    let m = &r.ensemble_metrics;
                    rows.push(ReportRow {
                        experiment: experiment.clone(),
                        model: ENSEMBLE_ROW.to_string(),
                        iteration: r.iteration,
                        labeled_size: r.labeled_size,
                        accuracy: m.accuracy,
                        avg_max_prob: m.avg_max_prob,
                        calibration_error: m.calibration_error,
                        pseudo_label_precision: r.pseudo_label_precision,
                    });
                }
            }
        }
    }
    rows
}

pub fn format_report(matrix: &ExperimentMatrix) -> Report {
    let rows = report_rows(matrix);
    Report { text: format_rows(&rows), rows }
}

struct Line<'a> {
    experiment: &'a str,
    model: &'a str,
    cells: Vec<Option<&'a ReportRow>>,
}

fn group(rows: &[ReportRow]) -> (Vec<(usize, usize)>, Vec<Line<'_>>) {
    let mut iterations: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !iterations.iter().any(|&(i, _)| i == r.iteration) {
            iterations.push((r.iteration, r.labeled_size));
        }
    }
    iterations.sort_unstable();
    let mut lines: Vec<Line> = Vec::new();
    for r in rows {
        let col = iterations.iter().position(|&(i, _)| i == r.iteration).expect("collected above");
        let idx = match lines.iter().position(|l| l.experiment == r.experiment && l.model == r.model) {
            Some(i) => i,
            None => {
                lines.push(Line { experiment: &r.experiment, model: &r.model, cells: vec![None; iterations.len()] });
                lines.len() - 1
            }
        };
        lines[idx].cells[col] = Some(r);
    }
    (iterations, lines)
}

/// Renders rows as two fixed-width tables (accuracy, then signed calibration
/// error with a trailing `|E| final` column). Rows keep first-seen order.
pub fn format_rows(rows: &[ReportRow]) -> String {
    let (iterations, lines) = group(rows);
    let headers: Vec<String> = iterations
        .iter()
        .map(|&(i, n)| if i == 0 { format!("Base (n={n})") } else { format!("Iter {i} (n={n})") })
        .collect();
    let ew = lines.iter().map(|l| l.experiment.len()).chain(["experiment".len()]).max().unwrap_or(0);
    let mw = lines.iter().map(|l| l.model.len()).chain(["model".len()]).max().unwrap_or(0);
    let cw = headers.iter().map(String::len).max().unwrap_or(0).max(8);

    let mut out = String::new();
    for (title, calib) in [("Accuracy", false), ("Calibration error (accuracy - avg max prob)", true)] {
        if calib {
            out.push('\n');
        }
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<ew$}  {:<mw$}", "experiment", "model");
        for h in &headers {
            let _ = write!(out, "  {h:>cw$}");
        }
        if calib {
            let _ = write!(out, "  {:>cw$}", "|E| final");
        }
        out.push('\n');
        let mut prev = "";
        for l in &lines {
            if !prev.is_empty() && prev != l.experiment {
                out.push('\n');
            }
            prev = l.experiment;
            let _ = write!(out, "{:<ew$}  {:<mw$}", l.experiment, l.model);
            for cell in &l.cells {
                match cell {
                    Some(r) => {
                        let v = if calib { r.calibration_error } else { r.accuracy };
                        let _ = write!(out, "  {v:>cw$.4}");
                    }
                    None => {
                        let _ = write!(out, "  {:>cw$}", "-");
                    }
                }
            }
            if calib {
                match l.cells.iter().rev().flatten().next() {
                    Some(r) => {
                        let _ = write!(out, "  {:>cw$.4}", r.calibration_error.abs());
                    }
                    None => {
                        let _ = write!(out, "  {:>cw$}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Tab-separated rows under [`TSV_HEADER`]. Floats use the shortest
/// representation that parses back to the same value.
pub fn rows_to_tsv(rows: &[ReportRow]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in rows {
        let precision = r.pseudo_label_precision.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.experiment, r.model, r.iteration, r.labeled_size, r.accuracy, r.avg_max_prob, r.calibration_error, precision
        );
    }
    out
}

pub fn parse_report_tsv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TSV_HEADER => {}
        _ => return Err(Error::Parse { row: 1, message: "missing report header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(Error::InconsistentColumns { row, expected: 8, found: f.len() });
        }
        let err = |what: &str| Error::Parse { row, message: format!("bad {what}") };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(what));
        rows.push(ReportRow {
            experiment: f[0].to_string(),
            model: f[1].to_string(),
            iteration: f[2].parse().map_err(|_| err("iteration"))?,
            labeled_size: f[3].parse().map_err(|_| err("labeled_size"))?,
            accuracy: num(f[4], "accuracy")?,
            avg_max_prob: num(f[5], "avg_max_prob")?,
            calibration_error: num(f[6], "calibration_error")?,
            pseudo_label_precision: if f[7].is_empty() { None } else { Some(num(f[7], "pseudo_label_precision")?) },
        });
    }
    Ok(rows)
}
