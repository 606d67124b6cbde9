//! Run configuration, checkpoints, and the generate/train/eval/reconstruct
//! commands.

mod checkpoint;
mod config;
mod dataset;
mod evaluate;
mod pgm;
mod reconstruct;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::ctdata::CtError;
use crate::lossmetrics::MetricError;
use crate::model::ModelError;
use crate::tensor::TensorError;

pub use checkpoint::{Checkpoint, CheckpointError, ParamRecord, RngState};
pub use config::{DataConfig, LossConfig, RunConfig};
pub use dataset::{
    cmd_generate, ensure_fresh_dir, load_dataset, load_index, load_split, DatasetIndex, Patient, DATASET_INDEX,
};
pub use evaluate::{cmd_eval, predict, EvalReport};
pub use pgm::{decode_pgm, encode_pgm};
pub use reconstruct::{cmd_reconstruct, ReconstructionManifest};
pub use trainer::{cmd_train, TrainSummary, LOSS_LOG, LOSS_LOG_HEADER, VAL_LOG, VAL_LOG_HEADER};

/// Process exit codes of the CLI.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output directory {} is not empty (use --force to overwrite)", .0.display())]
    OutputExists(PathBuf),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at step {step} (epoch {epoch}): loss {loss}, lr {lr}, grad norm {grad_norm}")]
    NonFinite {
        step: u64,
        epoch: u64,
        loss: f64,
        lr: f64,
        grad_norm: f64,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl TrainError {
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Config(_) | TrainError::OutputExists(_) => exit_code::CONFIG,
            TrainError::Checkpoint(
                CheckpointError::ShapeMismatch { .. }
                | CheckpointError::MissingParameter(_)
                | CheckpointError::UnexpectedParameter(_),
            ) => exit_code::CONFIG,
            TrainError::Data(_) | TrainError::Checkpoint(_) => exit_code::DATA,
            TrainError::NonFinite { .. } => exit_code::NUMERIC,
            TrainError::Internal(_) => exit_code::INTERNAL,
        }
    }
}

impl From<CtError> for TrainError {
    fn from(e: CtError) -> Self {
        TrainError::Data(e.to_string())
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) => TrainError::Config(e.to_string()),
            ModelError::InputSize { .. } => TrainError::Data(e.to_string()),
            ModelError::Tensor(t) => t.into(),
        }
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Internal(e.to_string())
    }
}

impl From<MetricError> for TrainError {
    fn from(e: MetricError) -> Self {
        TrainError::Internal(e.to_string())
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> TrainError {
    TrainError::Data(format!("{}: {e}", path.display()))
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
