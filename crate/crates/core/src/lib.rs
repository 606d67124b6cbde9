//! Low-dose CT reconstruction with a squeeze-and-excitation encoder-decoder.
//!
//! * [`tensor`] - reverse-mode tensor engine, Adam and initialization
//! * [`model`] - the encoder-decoder network
//! * [`lossmetrics`] - L1 + SSIM training objective and evaluation metrics
//! * [`ctdata`] - phantom simulation, projection, FBP and the volume format
//! * [`train`] - run configuration, checkpoints and the CLI verbs

pub mod ctdata;
pub mod lossmetrics;
pub mod model;
pub mod tensor;
pub mod train;
