//! Training objective (L1 + SSIM) and the image-quality metrics used for
//! evaluation.

mod loss;
mod metrics;
mod report;
mod ssim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

pub use loss::{combined_loss, l1_loss, ssim, ssim_loss, LossParts};
pub use metrics::{l1_error, mutual_information, nmse, psnr, PsnrMode};
pub use report::{render_table, MetricOptions, MetricRow, MetricStat, MetricsReport};
pub use ssim::ssim_value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image sizes differ: {got} vs {expected} elements")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("SSIM window {window} larger than image {h}x{w}")]
    WindowTooLarge { window: usize, h: usize, w: usize },
    #[error("reference image has zero norm")]
    ZeroReference,
    #[error("empty image set")]
    EmptySet,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Weights of the L1 and SSIM terms in the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta: 0.15,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(MetricError::InvalidParams(format!(
                "loss weights must be non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Local-window SSIM configuration.
///
/// The window is a separable Gaussian of `window_size` taps with standard
/// deviation `window_sigma`; an infinite sigma gives a uniform window, and a
/// uniform window covering the whole image reduces to the single-window
/// (global statistics) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub window_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::with_window(11, 1.5, 1.0)
    }
}

impl SsimParams {
    /// Stabilizers follow the data range: `c1 = (0.01 L)²`, `c2 = (0.03 L)²`.
    pub fn with_window(window_size: usize, window_sigma: f64, data_range: f64) -> Self {
        Self {
            window_size,
            window_sigma,
            c1: (0.01 * data_range).powi(2),
            c2: (0.03 * data_range).powi(2),
            data_range,
        }
    }

    /// Uniform window spanning a `size`×`size` image.
    pub fn global(size: usize, data_range: f64) -> Self {
        Self::with_window(size, f64::INFINITY, data_range)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size % 2 == 0 {
            return Err(MetricError::InvalidParams(format!(
                "SSIM window size must be odd, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0) {
            return Err(MetricError::InvalidParams(format!(
                "SSIM window sigma must be positive, got {}",
                self.window_sigma
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(MetricError::InvalidParams("SSIM stabilizers must be positive".into()));
        }
        if !(self.data_range > 0.0) {
            return Err(MetricError::InvalidParams(format!(
                "data range must be positive, got {}",
                self.data_range
            )));
        }
        Ok(())
    }
}
