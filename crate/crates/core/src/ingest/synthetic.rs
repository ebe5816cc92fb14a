//! Gaussian-cluster benchmark with out-of-distribution contamination of the
//! unlabeled split.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, OriginId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    /// Distance between neighbouring cluster means, in feature units.
    pub class_separation: f64,
    /// Fraction of the unlabeled split drawn from clusters outside the label set.
    #[serde(default)]
    pub ood_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 1 {
            return fail("num_classes must be >= 1".into());
        }
        if self.feature_dim < 1 {
            return fail("feature_dim must be >= 1".into());
        }
        if !self.n_labeled.is_multiple_of(self.num_classes) {
            return fail(format!(
                "n_labeled ({}) must be divisible by num_classes ({})",
                self.n_labeled, self.num_classes
            ));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return fail("class_separation must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.ood_fraction) {
            return fail("ood_fraction must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn n_ood(&self) -> usize {
        (self.ood_fraction * self.n_unlabeled as f64).floor() as usize
    }

    /// Number of extra clusters feeding the OOD examples (one per in-distribution
    /// class, none when the split is clean).
    pub fn n_ood_clusters(&self) -> usize {
        if self.n_ood() > 0 {
            self.num_classes
        } else {
            0
        }
    }
}

/// Ground truth for an unlabeled example. OOD examples carry a class index
/// `>= num_classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLabel {
    pub class: usize,
    pub ood: bool,
}

/// Diagnostics side-table: never consulted by training or selection.
pub type HiddenLabels = BTreeMap<OriginId, HiddenLabel>;

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
    pub hidden: HiddenLabels,
}

/// Cluster means: scaled one-hot vectors when the dimension allows (pairwise
/// distance exactly `sep`), otherwise evenly spaced on a circle in the first
/// two coordinates (adjacent distance `sep`), or on a line when `d = 1`.
fn cluster_means(count: usize, d: usize, sep: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            let mut mu = vec![0.0; d];
            if d >= count {
                mu[j] = sep / 2f64.sqrt();
            } else if d == 1 {
                mu[0] = j as f64 * sep;
            } else {
                let radius = sep / (2.0 * (PI / count as f64).sin());
                let angle = 2.0 * PI * j as f64 / count as f64;
                mu[0] = radius * angle.cos();
                mu[1] = radius * angle.sin();
            }
            mu
        })
        .collect()
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let c = spec.num_classes;
    let d = spec.feature_dim;
    let means = cluster_means(c + spec.n_ood_clusters(), d, spec.class_separation);
    let mut rng = seed::rng(spec.seed);
    let draw = |class: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        means[class]
            .iter()
            .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut next_id: OriginId = 0;
    let mut labeled = Vec::with_capacity(spec.n_labeled);
    for i in 0..spec.n_labeled {
        labeled.push(Example::labeled(next_id, draw(i % c, &mut rng), i % c));
        next_id += 1;
    }

    let n_ood = spec.n_ood();
    let n_ood_clusters = spec.n_ood_clusters();
    let mut classes: Vec<usize> = (0..spec.n_unlabeled)
        .map(|i| {
            if i < n_ood {
                c + rng.random_range(0..n_ood_clusters)
            } else {
                rng.random_range(0..c)
            }
        })
        .collect();
    classes.shuffle(&mut rng);
    let mut unlabeled = Vec::with_capacity(spec.n_unlabeled);
    let mut hidden = HiddenLabels::new();
    for class in classes {
        unlabeled.push(Example::unlabeled(next_id, draw(class, &mut rng)));
        hidden.insert(next_id, HiddenLabel { class, ood: class >= c });
        next_id += 1;
    }

    let mut test = Vec::with_capacity(spec.n_test);
    for i in 0..spec.n_test {
        test.push(Example::labeled(next_id, draw(i % c, &mut rng), i % c));
        next_id += 1;
    }

    Ok(SyntheticData {
        labeled: Dataset::new(labeled, d, c)?,
        unlabeled: Dataset::new(unlabeled, d, c)?,
        test: Dataset::new(test, d, c)?,
        hidden,
    })
}
