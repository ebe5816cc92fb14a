//! Datasets, the labeled/unlabeled pool partition, bootstrap subsampling and
//! pseudo-label bookkeeping.
//!
//! Pool transitions are pure: every operation on [`PoolState`] returns a new
//! state and leaves its input untouched. Feature buffers are reference
//! counted, so moving examples between datasets or drawing bootstrap samples
//! never copies pixel data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Stable identity of an example within a run.
pub type OriginId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    TrueLabel,
    /// Assigned by the ensemble built at the given iteration.
    PseudoLabel { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub class: usize,
    pub provenance: Provenance,
}

/// One feature vector with an optional label.
///
/// A label always carries its provenance, so "label present iff provenance
/// set" holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    origin_id: OriginId,
    features: Arc<[f64]>,
    label: Option<Label>,
}

impl Example {
    pub fn labeled(origin_id: OriginId, features: impl Into<Arc<[f64]>>, class: usize) -> Self {
        Example {
            origin_id,
            features: features.into(),
            label: Some(Label { class, provenance: Provenance::TrueLabel }),
        }
    }

    pub fn unlabeled(origin_id: OriginId, features: impl Into<Arc<[f64]>>) -> Self {
        Example { origin_id, features: features.into(), label: None }
    }

    pub fn origin_id(&self) -> OriginId {
        self.origin_id
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn class(&self) -> Option<usize> {
        self.label.map(|l| l.class)
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.label.map(|l| l.provenance)
    }

    pub fn is_pseudo_labeled(&self) -> bool {
        matches!(self.provenance(), Some(Provenance::PseudoLabel { .. }))
    }

    /// Same identity and label, new feature values.
    pub fn with_features(&self, features: impl Into<Arc<[f64]>>) -> Self {
        Example { origin_id: self.origin_id, features: features.into(), label: self.label }
    }

    fn with_pseudo_label(&self, class: usize, iteration: usize) -> Self {
        Example {
            origin_id: self.origin_id,
            features: Arc::clone(&self.features),
            label: Some(Label { class, provenance: Provenance::PseudoLabel { iteration } }),
        }
    }
}

/// Ordered collection of examples sharing a feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        Dataset { examples: Vec::new(), feature_dim, num_classes }
    }

    /// Builds a dataset, checking feature dimensions, class range, finiteness
    /// and origin-id uniqueness.
    pub fn new(examples: Vec<Example>, feature_dim: usize, num_classes: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            check_example(ex, feature_dim, num_classes)?;
            if !seen.insert(ex.origin_id) {
                return Err(Error::DuplicateId(ex.origin_id));
            }
        }
        Ok(Dataset { examples, feature_dim, num_classes })
    }

    /// A bootstrap draw: the same example may appear more than once, so the
    /// id uniqueness check is skipped. Members come from an already validated
    /// dataset.
    fn resampled(examples: Vec<Example>, feature_dim: usize, num_classes: usize) -> Self {
        Dataset { examples, feature_dim, num_classes }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Widens the class count, e.g. after loading an unlabeled file whose
    /// classes cannot be inferred.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        for ex in &self.examples {
            if let Some(class) = ex.class() {
                if class >= num_classes {
                    return Err(Error::ClassOutOfRange { class, num_classes });
                }
            }
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .map(|ex| ex.class().ok_or(Error::Unlabeled(ex.origin_id)))
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = OriginId> + '_ {
        self.examples.iter().map(|ex| ex.origin_id)
    }

    pub fn get(&self, id: OriginId) -> Option<&Example> {
        self.examples.iter().find(|ex| ex.origin_id == id)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

fn check_example(ex: &Example, feature_dim: usize, num_classes: usize) -> Result<()> {
    if ex.features.len() != feature_dim {
        return Err(Error::DimensionMismatch { expected: feature_dim, found: ex.features.len() });
    }
    if let Some(class) = ex.class() {
        if class >= num_classes {
            return Err(Error::ClassOutOfRange { class, num_classes });
        }
    }
    if ex.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeature(ex.origin_id));
    }
    Ok(())
}

/// Draws `k` samples of exactly `m` examples each, uniformly with
/// replacement from `training_set`.
///
/// `m` may exceed the set size. Output is a pure function of
/// `(training_set, m, k, seed)`.
pub fn subsample(training_set: &Dataset, m: usize, k: usize, seed: u64) -> Result<Vec<Dataset>> {
    if training_set.is_empty() {
        return Err(Error::EmptyLabeledPool);
    }
    if m == 0 || k == 0 {
        return Err(Error::InvalidConfig(format!("subsample needs m >= 1 and k >= 1 (got m={m}, k={k})")));
    }
    let n = training_set.len();
    let mut rng = seed::rng(seed);
    Ok((0..k)
        .map(|_| {
            let draw = (0..m)
                .map(|_| training_set.examples[rng.random_range(0..n)].clone())
                .collect();
            Dataset::resampled(draw, training_set.feature_dim, training_set.num_classes)
        })
        .collect())
}

/// The evolving partition of examples into a training set (true plus
/// pseudo-labeled) and the remaining unlabeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    labeled: Dataset,
    unlabeled: Dataset,
    iteration: usize,
}

impl PoolState {
    pub fn new(labeled: Dataset, unlabeled: Dataset) -> Result<Self> {
        if labeled.feature_dim != unlabeled.feature_dim && !unlabeled.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: labeled.feature_dim,
                found: unlabeled.feature_dim,
            });
        }
        if let Some(ex) = labeled.iter().find(|ex| ex.label.is_none()) {
            return Err(Error::Unlabeled(ex.origin_id));
        }
        if let Some(ex) = unlabeled.iter().find(|ex| ex.label.is_some()) {
            return Err(Error::LabeledInUnlabeledPool(ex.origin_id));
        }
        let labeled_ids: HashSet<OriginId> = labeled.ids().collect();
        if let Some(id) = unlabeled.ids().find(|id| labeled_ids.contains(id)) {
            return Err(Error::DuplicateId(id));
        }
        let unlabeled = Dataset { num_classes: labeled.num_classes, ..unlabeled };
        Ok(PoolState { labeled, unlabeled, iteration: 0 })
    }

    pub fn labeled(&self) -> &Dataset {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &Dataset {
        &self.unlabeled
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Moves the selected pool examples into the training set with their
    /// pseudo-labels, tagging them with the current iteration, and advances
    /// the iteration counter.
    pub fn merge_pseudo(&self, selected_ids: &[OriginId], labels: &[usize]) -> Result<PoolState> {
        if selected_ids.len() != labels.len() {
            return Err(Error::SelectionLengthMismatch {
                ids: selected_ids.len(),
                labels: labels.len(),
            });
        }
        let num_classes = self.labeled.num_classes;
        let position: HashMap<OriginId, usize> =
            self.unlabeled.ids().enumerate().map(|(i, id)| (id, i)).collect();
        let mut taken = vec![false; self.unlabeled.len()];
        let mut labeled = self.labeled.examples.clone();
        labeled.reserve(selected_ids.len());
        for (&id, &class) in selected_ids.iter().zip(labels) {
            let &pos = position.get(&id).ok_or(Error::UnknownUnlabeledId(id))?;
            if std::mem::replace(&mut taken[pos], true) {
                return Err(Error::DuplicateId(id));
            }
            if class >= num_classes {
                return Err(Error::ClassOutOfRange { class, num_classes });
            }
            labeled.push(self.unlabeled.examples[pos].with_pseudo_label(class, self.iteration));
        }
        let unlabeled = self
            .unlabeled
            .examples
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(ex, _)| ex.clone())
            .collect();
        Ok(PoolState {
            labeled: Dataset { examples: labeled, ..self.labeled.clone_shape() },
            unlabeled: Dataset { examples: unlabeled, ..self.unlabeled.clone_shape() },
            iteration: self.iteration + 1,
        })
    }

    /// Replaces the labels of previously pseudo-labeled examples. Provenance
    /// (the iteration of first selection) is kept.
    pub fn refresh_pseudo_labels(&self, new_labels: &BTreeMap<OriginId, usize>) -> Result<PoolState> {
        let num_classes = self.labeled.num_classes;
        let position: HashMap<OriginId, usize> =
            self.labeled.ids().enumerate().map(|(i, id)| (id, i)).collect();
        let mut examples = self.labeled.examples.clone();
        for (&id, &class) in new_labels {
            let &pos = position.get(&id).ok_or(Error::UnknownLabeledId(id))?;
            let ex = &mut examples[pos];
            match ex.provenance() {
                Some(Provenance::PseudoLabel { iteration }) => {
                    if class >= num_classes {
                        return Err(Error::ClassOutOfRange { class, num_classes });
                    }
                    *ex = ex.with_pseudo_label(class, iteration);
                }
                _ => return Err(Error::RelabelGroundTruth(id)),
            }
        }
        Ok(PoolState {
            labeled: Dataset { examples, ..self.labeled.clone_shape() },
            unlabeled: self.unlabeled.clone(),
            iteration: self.iteration,
        })
    }
}

impl Dataset {
    fn clone_shape(&self) -> Dataset {
        Dataset::empty(self.feature_dim, self.num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize, first_id: u64, labeled: bool) -> Dataset {
        let examples = (0..n)
            .map(|i| {
                let id = first_id + i as u64;
                let x = vec![i as f64, 1.0];
                if labeled {
                    Example::labeled(id, x, i % 3)
                } else {
                    Example::unlabeled(id, x)
                }
            })
            .collect();
        Dataset::new(examples, 2, 3).unwrap()
    }

    #[test]
    fn dataset_rejects_duplicate_ids_and_bad_dims() {
        let a = Example::labeled(1, vec![0.0, 1.0], 0);
        assert!(matches!(
            Dataset::new(vec![a.clone(), a.clone()], 2, 3),
            Err(Error::DuplicateId(1))
        ));
        assert!(matches!(Dataset::new(vec![a.clone()], 3, 3), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Dataset::new(vec![a], 2, 0), Err(Error::ClassOutOfRange { .. })));
    }

    #[test]
    fn subsample_sizes() {
        let t = dataset(5000, 0, true);
        let samples = subsample(&t, 4000, 3, 11).unwrap();
        assert_eq!(samples.len(), 3);
        assert!(samples.iter().all(|s| s.len() == 4000));
    }

    #[test]
    fn subsample_singleton_repeats() {
        let t = dataset(1, 42, true);
        let samples = subsample(&t, 3, 2, 0).unwrap();
        assert_eq!(samples.len(), 2);
        for s in &samples {
            assert_eq!(s.ids().collect::<Vec<_>>(), vec![42, 42, 42]);
        }
    }

    #[test]
    fn subsample_empty_errors() {
        let t = Dataset::empty(2, 3);
        let err = subsample(&t, 3, 2, 0).unwrap_err();
        assert_eq!(err.to_string(), "empty labeled pool");
    }

    #[test]
    fn subsample_allows_m_larger_than_set() {
        let t = dataset(4, 0, true);
        let s = subsample(&t, 10, 1, 3).unwrap();
        assert_eq!(s[0].len(), 10);
    }

    #[test]
    fn subsample_is_deterministic() {
        let t = dataset(50, 0, true);
        let a = subsample(&t, 30, 3, 99).unwrap();
        let b = subsample(&t, 30, 3, 99).unwrap();
        assert_eq!(a, b);
        let c = subsample(&t, 30, 3, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn merge_moves_and_tags() {
        let state = PoolState::new(dataset(5, 0, true), dataset(10, 100, false)).unwrap();
        let next = state.merge_pseudo(&[103, 101], &[2, 0]).unwrap();
        assert_eq!(next.iteration(), 1);
        assert_eq!(next.labeled().len(), 7);
        assert_eq!(next.unlabeled().len(), 8);
        let ex = next.labeled().get(103).unwrap();
        assert_eq!(ex.label(), Some(Label { class: 2, provenance: Provenance::PseudoLabel { iteration: 0 } }));
        assert!(next.unlabeled().get(103).is_none());
        // input untouched
        assert_eq!(state.unlabeled().len(), 10);
    }

    #[test]
    fn merge_table_scale() {
        let state = PoolState::new(dataset(5000, 0, true), dataset(100_000, 10_000, false)).unwrap();
        let ids: Vec<_> = (10_000..20_000).collect();
        let labels = vec![1; ids.len()];
        let next = state.merge_pseudo(&ids, &labels).unwrap();
        assert_eq!(next.labeled().len(), 15_000);
        assert_eq!(next.unlabeled().len(), 90_000);
    }

    #[test]
    fn merge_empty_selection_only_advances_iteration() {
        let state = PoolState::new(dataset(5, 0, true), dataset(10, 100, false)).unwrap();
        let next = state.merge_pseudo(&[], &[]).unwrap();
        assert_eq!(next.iteration(), 1);
        assert_eq!(next.labeled(), state.labeled());
        assert_eq!(next.unlabeled(), state.unlabeled());
    }

    #[test]
    fn merge_exhausts_pool() {
        let state = PoolState::new(dataset(5, 0, true), dataset(10, 100, false)).unwrap();
        let ids: Vec<_> = state.unlabeled().ids().collect();
        let next = state.merge_pseudo(&ids, &vec![0; ids.len()]).unwrap();
        assert!(next.unlabeled().is_empty());
        assert_eq!(next.labeled().len(), 15);
    }

    #[test]
    fn merge_errors() {
        let state = PoolState::new(dataset(5, 0, true), dataset(10, 100, false)).unwrap();
        let err = state.merge_pseudo(&[3], &[0]).unwrap_err();
        assert_eq!(err.to_string(), "unknown unlabeled id 3");
        assert!(matches!(state.merge_pseudo(&[101, 101], &[0, 0]), Err(Error::DuplicateId(101))));
        assert!(matches!(
            state.merge_pseudo(&[101], &[0, 1]),
            Err(Error::SelectionLengthMismatch { .. })
        ));
    }

    #[test]
    fn refresh_relabels_pseudo_only() {
        let state = PoolState::new(dataset(4, 0, true), dataset(6, 100, false)).unwrap();
        let state = state.merge_pseudo(&[100, 101, 102], &[0, 1, 2]).unwrap();
        let map: BTreeMap<_, _> = [(100, 1), (101, 1), (102, 1)].into_iter().collect();
        let next = state.refresh_pseudo_labels(&map).unwrap();
        for id in 100..103 {
            let ex = next.labeled().get(id).unwrap();
            assert_eq!(ex.class(), Some(1));
            assert_eq!(ex.provenance(), Some(Provenance::PseudoLabel { iteration: 0 }));
        }
        for id in 0..4 {
            assert_eq!(next.labeled().get(id), state.labeled().get(id));
        }
        assert_eq!(next.iteration(), state.iteration());
    }

    #[test]
    fn refresh_no_op() {
        let state = PoolState::new(dataset(4, 0, true), dataset(6, 100, false)).unwrap();
        assert_eq!(state.refresh_pseudo_labels(&BTreeMap::new()).unwrap(), state);
    }

    #[test]
    fn refresh_rejects_ground_truth() {
        let state = PoolState::new(dataset(4, 0, true), dataset(6, 100, false)).unwrap();
        let map: BTreeMap<_, _> = [(2, 0)].into_iter().collect();
        let err = state.refresh_pseudo_labels(&map).unwrap_err();
        assert_eq!(err.to_string(), "cannot relabel ground truth (id 2)");
    }

    #[test]
    fn pool_rejects_overlap() {
        let l = dataset(4, 0, true);
        let u = dataset(4, 3, false);
        assert!(matches!(PoolState::new(l, u), Err(Error::DuplicateId(3))));
    }
}
