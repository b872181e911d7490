//! Distribution-level and sample-level metrics over [`EmbeddingSet`]s.
//!
//! Every kernel here is a pure function. Internal parallelism is over fixed-size row blocks whose
//! partial results are combined in block order, so values are bit-identical for any thread count.

mod bootstrap;
mod cosine;
mod fld;
mod gaussian;
mod knn;
mod report;

pub use bootstrap::{bootstrap, BootstrapOutcome, BootstrapSpec};
pub use cosine::{paired_cosine, CosineSummary};
pub use fld::{fld, fld_detailed, FldConfig, FldOutcome};
pub use gaussian::{
    fit_gaussian, frechet_distance, frechet_distance_detailed, sqrtm_psd, FrechetOutcome,
    GaussianSummary, PsdSqrt, EIGEN_CLAMP_TOL,
};
pub use knn::{
    knn_radii, precision_recall, squared_distance, KnnRadii, PrecisionRecall, BLOCK_ROWS,
};
pub use report::{MetricName, MetricReport};

use crate::datastore::{DatastoreError, EmbeddingSet};
use crate::ErrorClass;

/// Neighbour count used for improved precision/recall when none is configured.
pub const DEFAULT_PR_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("k = {k} must be smaller than the row count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("matrix is not symmetric (max deviation {max_dev:e})")]
    Asymmetric { max_dev: f64 },
    #[error("symmetric eigendecomposition failed to converge")]
    EigenFailure,
    #[error("zero-norm {which} row at index {index}")]
    ZeroNorm { which: &'static str, index: usize },
    #[error("invalid bootstrap spec: {0}")]
    InvalidSpec(String),
    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<MetricsError>,
    },
    #[error("Fréchet distance evaluated to {0:e}, below the clamp tolerance")]
    NegativeDistance(f64),
    #[error("{metric} value {value} outside its valid range")]
    OutOfRange { metric: MetricName, value: f64 },
    #[error("report parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Data(#[from] DatastoreError),
}

impl MetricsError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MetricsError::KTooLarge { .. }
            | MetricsError::ZeroK
            | MetricsError::InvalidSpec(_)
            | MetricsError::TooFewRows { .. } => ErrorClass::Usage,
            MetricsError::NonFinite(_)
            | MetricsError::EigenFailure
            | MetricsError::NegativeDistance(_)
            | MetricsError::OutOfRange { .. } => ErrorClass::Numeric,
            MetricsError::Replicate { source, .. } => source.class(),
            MetricsError::Data(e) => e.class(),
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, MetricsError>;

pub(crate) fn same_dim(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimMismatch(a.dim(), b.dim()));
    }
    Ok(())
}
