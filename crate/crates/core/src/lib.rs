//! Evaluation harness and desk-scale diffusion engine for generative image models.
//!
//! The crate is split along the lines of the workflow it serves:
//!
//! * [`datastore`]: embedding and tile-manifest file formats, stratified and paired sampling.
//! * [`metrics`]: Fréchet distance, feature likelihood divergence, improved precision/recall,
//!   paired cosine similarity and bootstrapped statistics over embedding sets.
//! * [`preprocess`]: tile-coordinate expansion, center crops, anti-aliased bicubic resampling
//!   and a baseline JPEG codec used for preprocessing ablations.
//! * [`interpolant`]: a small stochastic-interpolant model (toy VAE, token transformer,
//!   frozen teacher) with representation alignment, classifier-free guidance, EMA and
//!   ODE/SDE samplers.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel` feature is
//! enabled and plain iterators otherwise. Every reduction has a fixed order, so results do not
//! depend on the number of worker threads.

pub mod datastore;
pub mod interpolant;
pub mod metrics;
pub mod par;
pub mod preprocess;
pub mod rng;

pub use datastore::{EmbeddingSet, PairedSets, Split, TileManifest, TileRecord};
pub use metrics::{GaussianSummary, MetricName, MetricReport};
pub use preprocess::{RasterImage, TokenGrid};

/// Coarse classification of failures, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or configuration supplied by the caller.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// A computation produced a non-finite or otherwise unusable value.
    Numeric,
}
