//! On-disk formats for embeddings and tile manifests, plus the sampling used by the
//! benchmark protocol (stratified selection and id-based pairing).

mod embedding;
mod manifest;
mod pairing;
mod sampling;

pub use embedding::{
    read_embeddings, write_embeddings, EmbeddingSet, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use manifest::{
    read_manifest, write_manifest, Split, TileManifest, TileRecord, MANIFEST_HEADER,
};
pub use pairing::{pair_by_id, PairedSets};
pub use sampling::{apportion, stratified_sample};

use crate::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum DatastoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload: expected {expected} bytes, got {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {rows}x{dim} needs {expected} values, got {found}")]
    Shape {
        rows: usize,
        dim: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid label: {0}")]
    Label(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("duplicate tile id {0:?}")]
    DuplicateId(String),
    #[error("candidate id {0:?} not present in reference")]
    UnmatchedId(String),
    #[error("requested {requested} entries from a population of {population}")]
    PopulationTooSmall { requested: usize, population: usize },
    #[error("group {group:?} needs {quota} entries but only has {available}")]
    GroupTooSmall {
        group: String,
        quota: usize,
        available: usize,
    },
    #[error("id list has {ids} entries but embedding set has {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

impl DatastoreError {
    pub fn class(&self) -> ErrorClass {
        match self {
            DatastoreError::PopulationTooSmall { .. } | DatastoreError::GroupTooSmall { .. } => {
                ErrorClass::Usage
            }
            DatastoreError::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, DatastoreError>;
