//! Iterative ensemble self-training.
//!
//! One round: build `k` training sets from the current labeled pool, train
//! one fresh model per set, score the test split, re-label earlier
//! pseudo-labeled examples with the new ensemble, pick the `p` unlabeled
//! examples whose averaged prediction has the lowest entropy, and move them
//! into the labeled pool with their argmax labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{predict_dataset, train, Activation, ModelSpec, ProbVector, TrainConfig, TrainedModel};
use crate::data::{subsample, Dataset, OriginId, PoolState};
use crate::ensemble::{ensemble_average, select_lowest_entropy, EnsemblePrediction};
use crate::error::{Error, Result};
use crate::ingest::{AugmentSpec, HiddenLabels};
use crate::metrics::{evaluate, EvalResult};
use crate::seed;

// seed stream tags
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_SUBSAMPLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    /// A single self-trained teacher.
    NonEnsemble,
    /// `k` teachers, each trained on the whole labeled pool.
    EnsembleNoSubsample,
    /// `k` teachers, each trained on a bootstrap sample of the labeled pool.
    EnsembleWithSubsample,
}

impl ExperimentMode {
    pub const ALL: [ExperimentMode; 3] = [
        ExperimentMode::NonEnsemble,
        ExperimentMode::EnsembleNoSubsample,
        ExperimentMode::EnsembleWithSubsample,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentMode::NonEnsemble => "non-ensemble",
            ExperimentMode::EnsembleNoSubsample => "ensemble-no-subsample",
            ExperimentMode::EnsembleWithSubsample => "ensemble-with-subsample",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == label)
    }

    pub fn is_ensemble(self) -> bool {
        self != ExperimentMode::NonEnsemble
    }
}

impl fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bootstrap sample size, either absolute or relative to the current pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleSize {
    Count(usize),
    Fraction(f64),
}

impl SubsampleSize {
    pub fn resolve(self, pool: usize) -> usize {
        match self {
            SubsampleSize::Count(m) => m,
            SubsampleSize::Fraction(f) => ((f * pool as f64).round() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub m: SubsampleSize,
    /// Examples pseudo-labeled per round.
    pub p: usize,
    pub num_iterations: usize,
    pub model_specs: Vec<ModelSpec>,
    pub train_config: TrainConfig,
    pub augment: Option<AugmentSpec>,
    pub seed: u64,
    /// Member index of `model_specs[0]` in the seed streams. Lets a
    /// single-teacher run reproduce member `j` of an ensemble run exactly.
    #[serde(default)]
    pub first_member_index: usize,
}

impl ExperimentConfig {
    /// Three members of increasing capacity: softmax-linear, MLP[64] and
    /// MLP[128, 64], all ReLU.
    pub fn default_specs(input_dim: usize, num_classes: usize) -> Vec<ModelSpec> {
        vec![
            ModelSpec::softmax_linear(input_dim, num_classes),
            ModelSpec::mlp(input_dim, num_classes, &[64], Activation::Relu),
            ModelSpec::mlp(input_dim, num_classes, &[128, 64], Activation::Relu),
        ]
    }

    pub fn new(mode: ExperimentMode, input_dim: usize, num_classes: usize, p: usize, num_iterations: usize) -> Self {
        ExperimentConfig {
            mode,
            m: SubsampleSize::Count(4000),
            p,
            num_iterations,
            model_specs: Self::default_specs(input_dim, num_classes),
            train_config: TrainConfig::default(),
            augment: None,
            seed: 0,
            first_member_index: 0,
        }
    }

    /// Ensemble size: 1 for the single-teacher mode, otherwise one member per spec.
    pub fn k(&self) -> usize {
        match self.mode {
            ExperimentMode::NonEnsemble => 1,
            _ => self.model_specs.len(),
        }
    }

    pub fn members(&self) -> &[ModelSpec] {
        &self.model_specs[..self.k().min(self.model_specs.len())]
    }

    pub fn validate(&self, feature_dim: usize, num_classes: usize) -> Result<()> {
        if self.model_specs.is_empty() {
            return Err(Error::InvalidConfig("at least one model spec is required".into()));
        }
        if self.mode == ExperimentMode::EnsembleWithSubsample {
            let ok = match self.m {
                SubsampleSize::Count(m) => m >= 1,
                SubsampleSize::Fraction(f) => f > 0.0 && f.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidConfig("subsample size m must be >= 1".into()));
            }
        }
        for spec in self.members() {
            spec.validate()?;
            if spec.input_dim != feature_dim || spec.num_classes != num_classes {
                return Err(Error::InvalidConfig(format!(
                    "model {} expects {}x{} but data is {}x{}",
                    spec.kind, spec.input_dim, spec.num_classes, feature_dim, num_classes
                )));
            }
        }
        self.train_config.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
            if a.feature_len() != feature_dim {
                return Err(Error::InvalidConfig(format!(
                    "augment image shape {:?} does not match feature_dim {feature_dim}",
                    a.image_shape
                )));
            }
        }
        Ok(())
    }
}

/// Test-set metrics of one round plus selection bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    /// Size of the set the round's models were trained from.
    pub labeled_size: usize,
    pub model_names: Vec<String>,
    pub per_model_metrics: Vec<EvalResult>,
    pub ensemble_metrics: EvalResult,
    /// Examples moved into the labeled pool at the end of this round.
    pub selected_count: usize,
    pub pool_remaining: usize,
    /// Previously pseudo-labeled examples whose label changed this round.
    pub relabeled_count: usize,
    /// Share of this round's pseudo-labels matching hidden ground truth
    /// (out-of-distribution picks count as wrong).
    pub pseudo_label_precision: Option<f64>,
    pub selected_ood_fraction: Option<f64>,
}

/// One selected example as written to the selection audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub origin_id: OriginId,
    pub member_max_probs: Vec<f64>,
    pub mean_probs: Vec<f64>,
    pub entropy: f64,
    pub pseudo_label: usize,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// The pool after this round's merge.
    pub state: PoolState,
    pub result: IterationResult,
    pub models: Vec<TrainedModel>,
    /// Ensemble predictions over the unlabeled pool seen by this round.
    pub predictions: Vec<EnsemblePrediction>,
    pub selected: Vec<OriginId>,
    pub pseudo_labels: Vec<usize>,
    pub refreshed: BTreeMap<OriginId, usize>,
}

impl IterationOutcome {
    pub fn audit_rows(&self) -> Vec<AuditRow> {
        let by_id: HashMap<OriginId, &EnsemblePrediction> =
            self.predictions.iter().map(|p| (p.example_id, p)).collect();
        self.selected
            .iter()
            .zip(&self.pseudo_labels)
            .map(|(id, &label)| {
                let pred = by_id[id];
                AuditRow {
                    origin_id: *id,
                    member_max_probs: pred.member_probs.iter().map(ProbVector::max).collect(),
                    mean_probs: pred.mean_probs.as_slice().to_vec(),
                    entropy: pred.entropy,
                    pseudo_label: label,
                }
            })
            .collect()
    }
}

fn member_seed(iteration_seed: u64, member: usize, stream: u64) -> u64 {
    seed::derive(iteration_seed, &[member as u64, stream])
}

fn ensemble_predictions(models: &[TrainedModel], data: &Dataset) -> Result<Vec<EnsemblePrediction>> {
    let per_model: Vec<Vec<ProbVector>> = models
        .par_iter()
        .map(|m| predict_dataset(m, data))
        .collect::<Result<_>>()?;
    data.iter()
        .enumerate()
        .map(|(i, ex)| {
            let members = per_model.iter().map(|p| p[i].clone()).collect();
            EnsemblePrediction::new(ex.origin_id(), members)
        })
        .collect()
}

fn evaluate_on_test(models: &[TrainedModel], test: &Dataset) -> Result<(Vec<EvalResult>, EvalResult)> {
    let labels = test.labels()?;
    let per_model: Vec<Vec<ProbVector>> = models
        .par_iter()
        .map(|m| predict_dataset(m, test))
        .collect::<Result<_>>()?;
    let member_metrics = per_model.iter().map(|p| evaluate(p, &labels)).collect::<Result<Vec<_>>>()?;
    let averaged = (0..test.len())
        .map(|i| ensemble_average(&per_model.iter().map(|p| p[i].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok((member_metrics, evaluate(&averaged, &labels)?))
}

/// One full round on `state`. Member seeds derive from `iteration_seed` and
/// the member index. `diagnostics` is only read after selection, to score it.
pub fn run_iteration(
    state: &PoolState,
    config: &ExperimentConfig,
    test: &Dataset,
    iteration_seed: u64,
    diagnostics: Option<&HiddenLabels>,
) -> Result<IterationOutcome> {
    let iteration = state.iteration();
    let labeled = state.labeled();
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledPool.at_iteration(iteration));
    }
    let members = config.members();
    let k = members.len();

    // (a) training sets
    let training_sets: Vec<Dataset> = match config.mode {
        ExperimentMode::EnsembleWithSubsample => {
            let m = config.m.resolve(labeled.len());
            subsample(labeled, m, k, seed::derive(iteration_seed, &[STREAM_SUBSAMPLE]))?
        }
        _ => vec![labeled.clone(); k],
    };

    // (b) fresh models
    let models: Vec<TrainedModel> = members
        .par_iter()
        .zip(training_sets.par_iter())
        .enumerate()
        .map(|(j, (spec, data))| {
            let g = config.first_member_index + j;
            let spec = spec.clone().with_seed(member_seed(iteration_seed, g, STREAM_INIT));
            let tc = TrainConfig {
                shuffle_seed: member_seed(iteration_seed, g, STREAM_SHUFFLE),
                ..config.train_config.clone()
            };
            train(&spec, data, &tc, config.augment.as_ref())
        })
        .collect::<Result<_>>()
        .map_err(|e| e.at_iteration(iteration))?;

    let (per_model_metrics, ensemble_metrics) = evaluate_on_test(&models, test)?;

    // (c-d) ensemble over the pool, and re-labeling of earlier pseudo-labels
    let predictions = ensemble_predictions(&models, state.unlabeled())?;
    let pseudo: Vec<_> = labeled.iter().filter(|ex| ex.is_pseudo_labeled()).cloned().collect();
    let mut refreshed = BTreeMap::new();
    let mut relabeled_count = 0;
    if !pseudo.is_empty() {
        let pseudo = Dataset::new(pseudo, labeled.feature_dim(), labeled.num_classes())?;
        for (ex, pred) in pseudo.iter().zip(ensemble_predictions(&models, &pseudo)?) {
            let label = pred.pseudo_label();
            if ex.class() != Some(label) {
                relabeled_count += 1;
            }
            refreshed.insert(ex.origin_id(), label);
        }
    }
    let refreshed_state = state.refresh_pseudo_labels(&refreshed)?;

    // (e-f) lowest-entropy selection with argmax labels
    let selected = select_lowest_entropy(&predictions, config.p);
    let label_of: HashMap<OriginId, usize> =
        predictions.iter().map(|p| (p.example_id, p.pseudo_label())).collect();
    let pseudo_labels: Vec<usize> = selected.iter().map(|id| label_of[id]).collect();

    // (g)
    let next = refreshed_state.merge_pseudo(&selected, &pseudo_labels)?;

    let (precision, ood_fraction) = match diagnostics {
        Some(hidden) if !selected.is_empty() => {
            let mut correct = 0usize;
            let mut ood = 0usize;
            for (id, &label) in selected.iter().zip(&pseudo_labels) {
                match hidden.get(id) {
                    Some(h) if h.ood => ood += 1,
                    Some(h) if h.class == label => correct += 1,
                    _ => {}
                }
            }
            let n = selected.len() as f64;
            (Some(correct as f64 / n), Some(ood as f64 / n))
        }
        _ => (None, None),
    };

    let result = IterationResult {
        iteration,
        labeled_size: labeled.len(),
        model_names: members
            .iter()
            .enumerate()
            .map(|(j, s)| format!("{}:{}", config.first_member_index + j + 1, s.kind))
            .collect(),
        per_model_metrics,
        ensemble_metrics,
        selected_count: selected.len(),
        pool_remaining: next.unlabeled().len(),
        relabeled_count,
        pseudo_label_precision: precision,
        selected_ood_fraction: ood_fraction,
    };
    Ok(IterationOutcome { state: next, result, models, predictions, selected, pseudo_labels, refreshed })
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    /// Base round first, then one entry per pseudo-labeling round.
    pub results: Vec<IterationResult>,
    /// Selected examples per round.
    pub audits: Vec<Vec<AuditRow>>,
    pub final_state: PoolState,
    pub final_models: Vec<TrainedModel>,
}

/// Runs the base round plus `num_iterations` pseudo-labeling rounds.
pub fn run_experiment(
    labeled: &Dataset,
    unlabeled: &Dataset,
    test: &Dataset,
    config: &ExperimentConfig,
    diagnostics: Option<&HiddenLabels>,
) -> Result<ExperimentRun> {
    run_experiment_observed(labeled, unlabeled, test, config, diagnostics, &mut |_| {})
}

/// As [`run_experiment`], handing every round's full outcome to `observer`.
pub fn run_experiment_observed(
    labeled: &Dataset,
    unlabeled: &Dataset,
    test: &Dataset,
    config: &ExperimentConfig,
    diagnostics: Option<&HiddenLabels>,
    observer: &mut dyn FnMut(&IterationOutcome),
) -> Result<ExperimentRun> {
    config.validate(labeled.feature_dim(), labeled.num_classes())?;
    if test.feature_dim() != labeled.feature_dim() {
        return Err(Error::DimensionMismatch { expected: labeled.feature_dim(), found: test.feature_dim() });
    }
    let mut state = PoolState::new(labeled.clone(), unlabeled.clone())?;
    let mut results = Vec::with_capacity(config.num_iterations + 1);
    let mut audits = Vec::with_capacity(config.num_iterations + 1);
    let mut final_models = Vec::new();
    for i in 0..=config.num_iterations {
        let outcome = run_iteration(&state, config, test, seed::derive(config.seed, &[i as u64]), diagnostics)?;
        observer(&outcome);
        audits.push(outcome.audit_rows());
        results.push(outcome.result);
        final_models = outcome.models;
        state = outcome.state;
    }
    Ok(ExperimentRun { config: config.clone(), results, audits, final_state: state, final_models })
}

/// Per-round results of one experiment mode. The single-teacher mode holds
/// one chain per model spec; ensemble modes hold exactly one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBlock {
    pub mode: ExperimentMode,
    pub chains: Vec<Vec<IterationResult>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub blocks: Vec<ExperimentBlock>,
}

impl ExperimentMatrix {
    pub fn single(mode: ExperimentMode, results: Vec<IterationResult>) -> Self {
        ExperimentMatrix { blocks: vec![ExperimentBlock { mode, chains: vec![results] }] }
    }

    pub fn block(&self, mode: ExperimentMode) -> Option<&ExperimentBlock> {
        self.blocks.iter().find(|b| b.mode == mode)
    }
}

/// The experiment configurations behind [`compare_modes`]: one
/// single-teacher run per model spec (seeded as that ensemble member), then
/// the two ensemble modes.
pub fn mode_configs(base: &ExperimentConfig) -> Vec<(ExperimentMode, Vec<ExperimentConfig>)> {
    let singles = base
        .model_specs
        .iter()
        .enumerate()
        .map(|(j, spec)| ExperimentConfig {
            mode: ExperimentMode::NonEnsemble,
            model_specs: vec![spec.clone()],
            first_member_index: base.first_member_index + j,
            ..base.clone()
        })
        .collect();
    let with_mode = |mode| ExperimentConfig { mode, ..base.clone() };
    vec![
        (ExperimentMode::NonEnsemble, singles),
        (ExperimentMode::EnsembleNoSubsample, vec![with_mode(ExperimentMode::EnsembleNoSubsample)]),
        (ExperimentMode::EnsembleWithSubsample, vec![with_mode(ExperimentMode::EnsembleWithSubsample)]),
    ]
}

/// Runs all three modes on identical data and seeds.
pub fn compare_modes(
    labeled: &Dataset,
    unlabeled: &Dataset,
    test: &Dataset,
    base_config: &ExperimentConfig,
    diagnostics: Option<&HiddenLabels>,
) -> Result<ExperimentMatrix> {
    let mut blocks = Vec::new();
    for (mode, configs) in mode_configs(base_config) {
        let chains = configs
            .iter()
            .map(|cfg| run_experiment(labeled, unlabeled, test, cfg, diagnostics).map(|r| r.results))
            .collect::<Result<_>>()?;
        blocks.push(ExperimentBlock { mode, chains });
    }
    Ok(ExperimentMatrix { blocks })
}
