//! Diffusion over coordinate grids: noise schedule, forward diffusion,
//! x0-predicting DDIM reverse steps, sampling with time-variant condition
//! refinement, the training step, and checkpointing.
//!
//! The crate is generic over the denoising network through the [`Denoiser`]
//! and [`TrainableDenoiser`] traits; it owns everything around the network:
//! what noise to add, how to walk the reverse process, how the refinement
//! condition is rebuilt between steps, and how parameters are updated and
//! persisted.

mod checkpoint;
mod ddim;
mod diffuse;
mod loss;
mod optim;
mod sampler;
mod schedule;
mod train;
mod types;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData};
pub use ddim::{ddim_step, ddim_step_between};
pub use diffuse::forward_diffuse;
pub use loss::{diffusion_loss, loss_gradient};
pub use optim::Adam;
pub use sampler::{build_refinement, dual_hypothesis_sample, sample, timestep_sequence};
pub use schedule::{make_schedule, NoiseSchedule};
pub use train::{tvcr_train_step, TrainItem};
pub use types::{
    ConditionBundle, Denoiser, FixedConditions, LatentGrid, TimeVariantCondition,
    TrainableDenoiser,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Mapping(#[from] mapping_core::MappingError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
