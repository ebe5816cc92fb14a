//! TOML run configuration.
//!
//! ```toml
//! schema = 1
//!
//! [data.synthetic]          # or [data.csv] / [data.stl10], exactly one
//! num_classes = 10
//! feature_dim = 32
//! n_labeled = 500
//! n_unlabeled = 20000
//! n_test = 4000
//! class_separation = 4.0
//! ood_fraction = 0.2
//! seed = 0
//!
//! [experiment]
//! mode = "all"              # or one of the three mode names
//! m_fraction = 1.0          # or m = 4000
//! p = 1000
//! iterations = 3
//! seed = 0
//!
//! [[experiment.models]]
//! kind = "softmax-linear"
//! [[experiment.models]]
//! kind = "mlp"
//! hidden = [64]
//! activation = "relu"
//!
//! [experiment.train]
//! epochs = 20
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use selftrain::classifier::{ModelKind, ModelSpec, TrainConfig};
use selftrain::ingest::{AugmentSpec, SyntheticSpec};
use selftrain::pipeline::{ExperimentConfig, ExperimentMode, SubsampleSize};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA: u32 = 1;
pub const DEFAULT_M: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub data: DataSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stl10: Option<Stl10Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    pub test: PathBuf,
    /// `origin_id,class,ood` rows for the unlabeled split, as written by `gen-data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_labels: Option<PathBuf>,
    /// Defaults to one more than the largest label seen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stl10Source {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub unlabeled_images: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_fraction: Option<f64>,
    pub p: usize,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Empty means softmax-linear, MLP[64] and MLP[128, 64].
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSpec>,
}

fn default_mode() -> String {
    "all".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Where `gen-data` writes its files.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { data_dir: default_data_dir(), formats: default_formats() }
    }
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Text, ReportFormat::Tsv]
}

/// Which modes a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    All,
    Single(ExperimentMode),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.data.csv {
            fix(&mut c.labeled);
            fix(&mut c.unlabeled);
            fix(&mut c.test);
            if let Some(h) = &mut c.hidden_labels {
                fix(h);
            }
        }
        if let Some(s) = &mut self.data.stl10 {
            for p in [&mut s.train_images, &mut s.train_labels, &mut s.unlabeled_images, &mut s.test_images, &mut s.test_labels] {
                fix(p);
            }
        }
        fix(&mut self.output.data_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(CliError::config(format!("unsupported config schema {} (expected {CONFIG_SCHEMA})", self.schema)));
        }
        let sources = [self.data.synthetic.is_some(), self.data.csv.is_some(), self.data.stl10.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(CliError::config("exactly one of [data.synthetic], [data.csv], [data.stl10] must be given"));
        }
        if let Some(s) = &self.data.synthetic {
            s.validate()?;
        }
        self.mode_selection()?;
        let e = &self.experiment;
        match (e.m, e.m_fraction) {
            (Some(_), Some(_)) => return Err(CliError::config("set at most one of experiment.m and experiment.m_fraction")),
            (Some(0), None) => return Err(CliError::config("experiment.m must be >= 1")),
            (None, Some(f)) if !(f > 0.0 && f.is_finite()) => {
                return Err(CliError::config("experiment.m_fraction must be > 0"))
            }
            _ => {}
        }
        e.train.validate()?;
        if let Some(a) = &e.augment {
            a.validate()?;
        }
        if self.output.formats.is_empty() {
            return Err(CliError::config("output.formats must list at least one format"));
        }
        Ok(())
    }

    pub fn mode_selection(&self) -> Result<ModeSelection> {
        match self.experiment.mode.as_str() {
            "all" => Ok(ModeSelection::All),
            other => ExperimentMode::from_label(other).map(ModeSelection::Single).ok_or_else(|| {
                CliError::config(format!(
                    "unknown experiment.mode {other:?}; expected all, non-ensemble, ensemble-no-subsample or ensemble-with-subsample"
                ))
            }),
        }
    }

    /// Pipeline configuration for data of the given shape. With mode `all`
    /// the result is the base for the mode comparison.
    pub fn experiment_config(&self, input_dim: usize, num_classes: usize) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        let mode = match self.mode_selection()? {
            ModeSelection::All => ExperimentMode::EnsembleWithSubsample,
            ModeSelection::Single(m) => m,
        };
        let model_specs = if e.models.is_empty() {
            ExperimentConfig::default_specs(input_dim, num_classes)
        } else {
            e.models
                .iter()
                .map(|kind| ModelSpec { kind: kind.clone(), input_dim, num_classes, init_seed: 0 })
                .collect()
        };
        let m = match (e.m, e.m_fraction) {
            (_, Some(f)) => SubsampleSize::Fraction(f),
            (Some(m), None) => SubsampleSize::Count(m),
            (None, None) => SubsampleSize::Count(DEFAULT_M),
        };
        let config = ExperimentConfig {
            mode,
            m,
            p: e.p,
            num_iterations: e.iterations,
            model_specs,
            train_config: e.train.clone(),
            augment: e.augment.clone(),
            seed: e.seed,
            first_member_index: 0,
        };
        config.validate(input_dim, num_classes)?;
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form, independent of TOML formatting.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
schema = 1
[data.synthetic]
num_classes = 3
feature_dim = 4
n_labeled = 30
n_unlabeled = 100
n_test = 30
class_separation = 3.0

[experiment]
p = 10
iterations = 2
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse(SYNTH).unwrap();
        assert_eq!(c.mode_selection().unwrap(), ModeSelection::All);
        let e = c.experiment_config(4, 3).unwrap();
        assert_eq!(e.k(), 3);
        assert_eq!(e.m, SubsampleSize::Count(DEFAULT_M));
        assert_eq!(e.train_config, TrainConfig::default());
        assert_eq!(c.output.formats, vec![ReportFormat::Text, ReportFormat::Tsv]);
    }

    #[test]
    fn models_and_train_overrides() {
        let text = format!(
            "{SYNTH}mode = \"non-ensemble\"\nm_fraction = 0.5\n[[experiment.models]]\nkind = \"mlp\"\nhidden = [5]\nactivation = \"tanh\"\n[experiment.train]\nepochs = 2\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        let e = c.experiment_config(4, 3).unwrap();
        assert_eq!(e.mode, ExperimentMode::NonEnsemble);
        assert_eq!(e.m, SubsampleSize::Fraction(0.5));
        assert_eq!(e.model_specs[0].kind.to_string(), "mlp[5]-tanh");
        assert_eq!(e.train_config.epochs, 2);
        assert_eq!(e.train_config.learning_rate, 1e-3);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            SYNTH.replace("schema = 1", "schema = 2"),
            SYNTH.replace("[data.synthetic]", "[data.csv]\nlabeled=\"a\"\nunlabeled=\"b\"\ntest=\"c\"\n[data.synthetic]"),
            format!("{SYNTH}mode = \"bagging\"\n"),
            format!("{SYNTH}m = 5\nm_fraction = 0.5\n"),
            format!("{SYNTH}m = 0\n"),
            format!("{SYNTH}bogus = 1\n"),
            SYNTH.replace("class_separation = 3.0", "class_separation = -1.0"),
        ];
        for text in cases {
            let err = RunConfig::parse(&text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}\n{err}");
        }
        let no_source = "schema = 1\n[data]\n[experiment]\np = 1\niterations = 0\n";
        assert!(RunConfig::parse(no_source).unwrap_err().message.contains("exactly one"));
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = RunConfig::parse(SYNTH).unwrap();
        let b = RunConfig::parse(&SYNTH.replace("p = 10", "p   =   10   # comment")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = RunConfig::parse(&SYNTH.replace("p = 10", "p = 11")).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let text = "schema = 1\n[data.csv]\nlabeled = \"l.csv\"\nunlabeled = \"/abs/u.csv\"\ntest = \"t.csv\"\n[experiment]\np = 1\niterations = 0\n";
        let mut c = RunConfig::parse(text).unwrap();
        c.resolve_paths(Path::new("/cfg"));
        let csv = c.data.csv.unwrap();
        assert_eq!(csv.labeled, PathBuf::from("/cfg/l.csv"));
        assert_eq!(csv.unlabeled, PathBuf::from("/abs/u.csv"));
        assert_eq!(c.output.data_dir, PathBuf::from("/cfg/data"));
    }
}
