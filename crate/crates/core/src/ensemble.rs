//! Ensemble averaging, Shannon entropy and lowest-entropy selection.

use std::cmp::Ordering;

use crate::classifier::ProbVector;
use crate::data::OriginId;
use crate::error::{Error, Result};

/// Member predictions for one unlabeled example plus their average and its
/// entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub example_id: OriginId,
    pub member_probs: Vec<ProbVector>,
    pub mean_probs: ProbVector,
    /// Nats.
    pub entropy: f64,
}

impl EnsemblePrediction {
    pub fn new(example_id: OriginId, member_probs: Vec<ProbVector>) -> Result<Self> {
        let mean_probs = ensemble_average(&member_probs)?;
        let entropy = shannon_entropy(&mean_probs);
        Ok(EnsemblePrediction { example_id, member_probs, mean_probs, entropy })
    }

    pub fn pseudo_label(&self) -> usize {
        pseudo_label(&self.mean_probs)
    }
}

/// Elementwise arithmetic mean of the member vectors.
pub fn ensemble_average(member_probs: &[ProbVector]) -> Result<ProbVector> {
    let first = member_probs.first().ok_or(Error::EmptyInput)?;
    let c = first.len();
    let mut mean = vec![0.0; c];
    for p in member_probs {
        if p.len() != c {
            return Err(Error::LengthMismatch { left: c, right: p.len() });
        }
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += v;
        }
    }
    let k = member_probs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(ProbVector::from_raw(mean))
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    p.as_slice().iter().filter(|&&v| v > 0.0).fold(0.0, |h, &v| h - v * v.ln())
}

fn rank(a: &(f64, OriginId), b: &(f64, OriginId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Ids of the `min(p, n)` most confident predictions, ordered by entropy and
/// then by id.
pub fn select_lowest_entropy(preds: &[EnsemblePrediction], p: usize) -> Vec<OriginId> {
    let mut keys: Vec<(f64, OriginId)> = preds.iter().map(|e| (e.entropy, e.example_id)).collect();
    let take = p.min(keys.len());
    if take == 0 {
        return Vec::new();
    }
    if take < keys.len() {
        keys.select_nth_unstable_by(take - 1, rank);
        keys.truncate(take);
    }
    keys.sort_unstable_by(rank);
    keys.into_iter().map(|(_, id)| id).collect()
}

/// Argmax with ties to the lowest class index, same rule as prediction.
pub fn pseudo_label(pred: &ProbVector) -> usize {
    pred.argmax()
}
