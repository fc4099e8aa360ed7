use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),

    /// Magic, version, dimension or length mismatch in one of the on-disk formats.
    #[error("format violation: {0}")]
    Format(String),

    #[error("image {image_id} references row {row}, but the feature file has {row_count} rows")]
    DanglingRow {
        image_id: usize,
        row: usize,
        row_count: usize,
    },

    #[error("feature row {0} is referenced by more than one object")]
    DuplicateRow(usize),

    #[error("feature row {0} is the zero vector")]
    ZeroRow(usize),

    #[error("feature row {0} has a non-finite entry")]
    NonFiniteRow(usize),

    #[error("image {0} has no annotations")]
    EmptyImage(usize),

    #[error("image ids must be dense 0..{num_images} and unique, found {found}")]
    BadImageId { found: usize, num_images: usize },

    #[error("image {image_id}: class {class_id} is outside 0..{num_classes}")]
    BadClass {
        image_id: usize,
        class_id: usize,
        num_classes: usize,
    },

    #[error("image {image_id}: degenerate box {bbox:?}")]
    BadBox { image_id: usize, bbox: [f64; 4] },

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("class {0} has no objects")]
    EmptyClass(usize),

    #[error("subset is empty")]
    EmptySubset,

    #[error("image {0} is not in the dataset")]
    UnknownImage(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{method}: no admissible sample after {retries} retries")]
    RetryBudgetExhausted { method: &'static str, retries: usize },

    #[error("kl divergence undefined: q[{0}] = 0 where p[{0}] > 0")]
    KlUndefined(usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}
