//! Accuracy, average maximum probability and the signed calibration error
//! `accuracy - avg_max_prob`.

mod report;

use serde::{Deserialize, Serialize};

use crate::classifier::ProbVector;
use crate::error::{Error, Result};

pub use report::{
    format_report, format_rows, parse_report_tsv, report_rows, rows_to_tsv, Report, ReportRow, ENSEMBLE_ROW, TSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub avg_max_prob: f64,
    /// Signed: negative means under-confident.
    pub calibration_error: f64,
    pub n_test: usize,
}

/// Fraction of predictions whose argmax (lowest index on ties) equals the label.
pub fn accuracy(predictions: &[ProbVector], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, &y)| p.argmax() == y).count();
    Ok(correct as f64 / predictions.len() as f64)
}

pub fn avg_max_prob(predictions: &[ProbVector]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(predictions.iter().map(ProbVector::max).sum::<f64>() / predictions.len() as f64)
}

pub fn calibration_error(accuracy: f64, avg_max_prob: f64) -> f64 {
    accuracy - avg_max_prob
}

pub fn evaluate(predictions: &[ProbVector], labels: &[usize]) -> Result<EvalResult> {
    let accuracy = accuracy(predictions, labels)?;
    let avg_max_prob = avg_max_prob(predictions)?;
    Ok(EvalResult {
        accuracy,
        avg_max_prob,
        calibration_error: calibration_error(accuracy, avg_max_prob),
        n_test: predictions.len(),
    })
}
