//! Mean-of-Means network: a k-stream MLP encoder from per-camera estimator
//! batches to the world-frame body center, regulated by a decoder of learned
//! per-camera 3×4 matrices that maps the prediction back to pixel means.

mod checkpoint;
mod gradcheck;
mod layer;
mod model;
mod train;

use thiserror::Error;

use crate::sampling::SamplingError;

pub use checkpoint::{Checkpoint, EpochRecord, CHECKPOINT_FORMAT};
pub use gradcheck::{gradient_check, GradCheckReport, TensorCheck, GRADCHECK_REL_FLOOR};
pub use layer::{Activation, DenseLayer, Mlp, MlpTrace};
pub use model::{
    decode, Architecture, DecoderMode, DecoderParams, EncoderParams, LossBreakdown, Mat34, MomNet,
    Normalizer, Params, CAMERA_INPUT_DIM, DIVISION_GUARD,
};
pub use train::{
    predict, train, train_with_observer, ObservationSource, TrainConfig, DIVERGENCE_FACTOR,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("perspective decoder division guard tripped (camera {camera}, h2 = {depth:e})")]
    DivisionGuard { camera: usize, depth: f64 },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss {loss:e} exceeds 1000x initial {initial:e}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("unsupported checkpoint format {0:?}")]
    UnsupportedFormat(String),
    #[error("checkpoint parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}
