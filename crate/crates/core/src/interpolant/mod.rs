//! Linear stochastic interpolant between latents (`t = 0`) and Gaussian noise (`t = 1`), with a
//! toy autoencoder, a token transformer denoiser, representation alignment and samplers.

mod checkpoint;
mod field;
mod models;
mod path;
mod sampler;
pub mod tape;
mod toy;
mod train;

pub use checkpoint::{Checkpoint, TensorGroup, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use field::{generate_images, teacher_features, ModelField};
pub use models::{
    align_loss, patchify, unpatchify, Conditioning, DenoiserModel, DenoiserOut, DenoiserShape,
    Depth, Encoded, ParamStore, TeacherExtractor, ToyVae, IMAGE_SIDE, LATENT_CHANNELS, LATENT_DIM,
    LATENT_SIDE, TOKENS,
};
pub use path::{
    cfg_velocity, interpolate_condition, interpolate_forward, velocity_to_estimates,
    DiffusionSchedule, Estimates, InterpolantState, SamplerConfig, Scheme,
};
pub use sampler::{
    sample, sample_ode, sample_sde, GaussianField, VelocityField, ZeroField, CHAIN_CHUNK,
};
pub use toy::{
    generate_toy_dataset, render_region, render_tile, slide_id, toy_manifest, ToyDataset,
    ToyDatasetConfig, SLIDE_SIDE,
};
pub use train::{
    ema_update, AdamState, EmaShadow, Gradients, LossBreakdown, StepInputs, TrainConfig, TrainData,
    Trainer,
};

use crate::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum InterpolantError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("time {0} outside [0, 1]")]
    Time(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("zero-norm feature vector at position {position}")]
    ZeroNorm { position: usize },
    #[error("sampler state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("non-finite {term} loss at step {step}")]
    NonFiniteLoss { term: &'static str, step: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error(transparent)]
    Datastore(#[from] crate::datastore::DatastoreError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl InterpolantError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config(_) | Self::Time(_) => ErrorClass::Usage,
            Self::ZeroNorm { .. } | Self::NonFiniteState { .. } | Self::NonFiniteLoss { .. } => {
                ErrorClass::Numeric
            }
            Self::Preprocess(e) => e.class(),
            Self::Datastore(e) => e.class(),
            Self::Metric(e) => e.class(),
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, InterpolantError>;
