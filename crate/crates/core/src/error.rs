use crate::data::OriginId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Divergence,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty labeled pool")]
    EmptyLabeledPool,
    #[error("unknown unlabeled id {0}")]
    UnknownUnlabeledId(OriginId),
    #[error("unknown labeled id {0}")]
    UnknownLabeledId(OriginId),
    #[error("duplicate id {0}")]
    DuplicateId(OriginId),
    #[error("selection has {ids} ids but {labels} labels")]
    SelectionLengthMismatch { ids: usize, labels: usize },
    #[error("cannot relabel ground truth (id {0})")]
    RelabelGroundTruth(OriginId),
    #[error("example {0} is labeled but belongs to the unlabeled pool")]
    LabeledInUnlabeledPool(OriginId),

    #[error("truncated STL-10 file: {len} bytes is not a multiple of the {record}-byte record")]
    TruncatedStl10 { len: usize, record: usize },
    #[error("invalid label byte {byte} at record {index}")]
    InvalidLabelByte { byte: u8, index: usize },
    #[error("STL-10 label file has {labels} entries but image file has {images} records")]
    Stl10LabelCount { labels: usize, images: usize },
    #[error("inconsistent column count at row {row}: expected {expected}, found {found}")]
    InconsistentColumns { row: usize, expected: usize, found: usize },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("augment shape mismatch: image shape {shape:?} needs {expected} features, example has {found}")]
    AugmentShape { shape: (usize, usize, usize), expected: usize, found: usize },

    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("example {0} has a non-finite feature")]
    NonFiniteFeature(OriginId),
    #[error("example {0} has no label")]
    Unlabeled(OriginId),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Diverged { .. } => ErrorCategory::Divergence,
            Error::AtIteration { source, .. } => source.category(),
            Error::InvalidConfig(_) => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}
