//! Loss, optimizer, the epoch loop and checkpoint files.

mod adam;
mod checkpoint;
mod fit;
mod loss;

use std::path::PathBuf;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use fit::{
    fit, validation_loss, EpochRecord, FitOutcome, StopReason, TrainConfig, TrainReport, Trainer,
    REPORT_HEADER,
};
pub use loss::{joint_rmse, loss_joint_rmse};

use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("gradient of {name} is not finite")]
    NonFiniteGradient { name: String },
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    /// True for failures caused by numbers leaving the finite range.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteLoss
                | TrainError::NonFiniteGradient { .. }
                | TrainError::Numerics(NumericsError::NonFinite { .. })
                | TrainError::Model(ModelError::Numerics(NumericsError::NonFinite { .. }))
        )
    }
}
