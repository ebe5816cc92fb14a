//! Iterative ensemble self-training for semi-supervised classification.
//!
//! A small pool of labeled examples trains an ensemble of classifiers, each
//! on its own bootstrap sample. The ensemble labels the unlabeled examples it
//! is most certain about (lowest entropy of the averaged prediction), those
//! join the labeled pool, and the process repeats.

pub mod classifier;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod seed;

pub use classifier::{ModelKind, ModelSpec, ProbVector, TrainConfig, TrainedModel};
pub use data::{Dataset, Example, OriginId, PoolState, Provenance};
pub use ensemble::EnsemblePrediction;
pub use error::{Error, ErrorCategory, Result};
pub use metrics::EvalResult;
pub use pipeline::{
    compare_modes, run_experiment, run_iteration, ExperimentConfig, ExperimentMatrix, ExperimentMode, IterationResult,
    SubsampleSize,
};
