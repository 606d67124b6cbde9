//! The encoder-decoder: a residual encoder with scSE attention and a
//! depthwise-separable ASPP bottom, and a four-level decoder whose outputs
//! are fused into the predicted middle slice.
//!
//! Input is a stack of three adjacent slices `(n, 3, h, w)`, output the
//! restored middle slice `(n, 1, h, w)`. `h` and `w` must be multiples of 16.

mod attention;
mod decoder;
mod encoder;
mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Graph, ParamStore, TensorError, Var};

pub use attention::{ChannelSe, Scse, SpatialSe};
pub use decoder::{DecoderBlock, ReconstructionHead};
pub use encoder::{Aspp, Bottleneck, Encoder, EncoderOutputs, SeparableBranch, Stem};
pub use layers::{BatchNorm, Conv, ConvBn};

/// Slices per input stack.
pub const TRIPLET: usize = 3;
/// Bottleneck output width relative to its inner width.
pub const EXPANSION: usize = 4;
/// Total downsampling of the encoder.
pub const OUTPUT_STRIDE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input {h}x{w} unsupported: {reason}")]
    InputSize { h: usize, w: usize, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub stem_channels: usize,
    /// Bottleneck count per encoder stage.
    pub stage_block_counts: [usize; 4],
    /// Inner width per stage; the stage output is four times this.
    pub stage_channels: [usize; 4],
    pub se_reduction: usize,
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub skip_projection_channels: usize,
    pub decoder_channels: [usize; 4],
    /// Scales every channel count above, rounded, at least 1.
    pub width_multiplier: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stem_channels: 16,
            stage_block_counts: [3, 4, 6, 3],
            stage_channels: [16, 32, 64, 128],
            se_reduction: 16,
            aspp_rates: vec![6, 12, 18],
            aspp_channels: 64,
            skip_projection_channels: 12,
            decoder_channels: [64, 48, 32, 24],
            width_multiplier: 1.0,
        }
    }
}

impl ModelConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            stage_block_counts: [1, 1, 1, 1],
            aspp_rates: vec![1, 2, 3],
            width_multiplier: 0.25,
            ..Self::default()
        }
    }

    pub fn scaled(&self, channels: usize) -> usize {
        ((channels as f64 * self.width_multiplier).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.width_multiplier.is_finite() && self.width_multiplier > 0.0) {
            return bad(format!(
                "width_multiplier must be positive, got {}",
                self.width_multiplier
            ));
        }
        if self.stage_block_counts.contains(&0) {
            return bad("every stage needs at least one block".into());
        }
        let widths = [self.stem_channels, self.aspp_channels, self.skip_projection_channels];
        if widths
            .iter()
            .chain(&self.stage_channels)
            .chain(&self.decoder_channels)
            .any(|&c| c == 0)
        {
            return bad("channel counts must be positive".into());
        }
        if self.se_reduction == 0 {
            return bad("se_reduction must be positive".into());
        }
        if self.aspp_rates.is_empty() || self.aspp_rates.contains(&0) {
            return bad(format!(
                "aspp_rates must be non-empty and positive, got {:?}",
                self.aspp_rates
            ));
        }
        Ok(())
    }

    /// Checks a spatial size against the encoder stride and the ASPP rates.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let err = |reason: String| Err(ModelError::InputSize { h, w, reason });
        if h == 0 || w == 0 || h % OUTPUT_STRIDE != 0 || w % OUTPUT_STRIDE != 0 {
            return err(format!(
                "height and width must be positive multiples of {OUTPUT_STRIDE}"
            ));
        }
        let bottom = (h / OUTPUT_STRIDE).min(w / OUTPUT_STRIDE);
        if let Some(&r) = self.aspp_rates.iter().find(|&&r| r >= bottom) {
            return err(format!(
                "ASPP rate {r} reaches past a {}x{} bottom feature map",
                h / OUTPUT_STRIDE,
                w / OUTPUT_STRIDE
            ));
        }
        Ok(())
    }
}

/// Intermediate and final outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub encoder: EncoderOutputs,
    /// Decoder block outputs at strides 8, 4, 2 and 1.
    pub decoder: [Var; 4],
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct HqiNet {
    config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: [DecoderBlock; 4],
    pub head: ReconstructionHead,
}

impl HqiNet {
    /// Registers every parameter in `store` and initializes it from `seed`.
    pub fn new(config: ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = layers::Builder {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let encoder = Encoder::build(&mut b, &config)?;
        let stage_out = |s: usize| config.scaled(config.stage_channels[s]) * EXPANSION;
        let skip_c = [stage_out(2), stage_out(1), stage_out(0), TRIPLET];
        let proj = config.scaled(config.skip_projection_channels);
        let dec_c = config.decoder_channels.map(|c| config.scaled(c));
        let mut c_in = config.scaled(config.aspp_channels);
        let mut blocks = Vec::with_capacity(4);
        for i in 0..4 {
            let name = format!("decoder.block{}", i + 1);
            blocks.push(DecoderBlock::build(&mut b, &name, c_in, skip_c[i], proj, dec_c[i])?);
            c_in = dec_c[i];
        }
        let decoder: [DecoderBlock; 4] = blocks.try_into().expect("four decoder blocks");
        let head = ReconstructionHead::build(&mut b, dec_c.iter().sum(), dec_c[3])?;
        Ok(Self {
            config,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        Ok(self.forward_all(g, x)?.output)
    }

    pub fn forward_all(&self, g: &mut Graph<'_>, x: Var) -> Result<Outputs> {
        let s = g.shape(x);
        if s.c != TRIPLET {
            return Err(TensorError::ShapeMismatch {
                op: "model input",
                dim: "channels",
                got: s.c,
                expected: TRIPLET,
            }
            .into());
        }
        self.config.check_input(s.h, s.w)?;
        let enc = self.encoder.forward(g, x)?;
        // The last block has no stride-1 encoder feature; the input stack
        // itself serves as its skip.
        let skips = [enc.stages[2], enc.stages[1], enc.stages[0], x];
        let mut h = enc.bottom;
        let mut decoder = [h; 4];
        for (i, (block, skip)) in self.decoder.iter().zip(skips).enumerate() {
            h = block.forward(g, h, skip)?;
            decoder[i] = h;
        }
        let output = self.head.forward(g, &decoder, s.h, s.w)?;
        Ok(Outputs {
            encoder: enc,
            decoder,
            output,
        })
    }
}
