use super::layers::{Builder, Conv, ConvBn};
use super::Result;
use crate::tensor::{Conv2dOptions, Graph, TensorError, Var};

/// Upsample 2×, concatenate the projected skip, refine with two 3×3 layers.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub skip_proj: ConvBn,
    pub refine1: ConvBn,
    pub refine2: ConvBn,
}

impl DecoderBlock {
    pub(crate) fn build(
        b: &mut Builder<'_>,
        name: &str,
        c_in: usize,
        c_skip: usize,
        c_proj: usize,
        c_out: usize,
    ) -> Result<Self> {
        let same = Conv2dOptions::same(3, 1);
        Ok(Self {
            skip_proj: b.conv_bn(
                &format!("{name}.skip_proj"),
                c_skip,
                c_proj,
                1,
                Conv2dOptions::default(),
                true,
            )?,
            refine1: b.conv_bn(&format!("{name}.refine1"), c_in + c_proj, c_out, 3, same, true)?,
            refine2: b.conv_bn(&format!("{name}.refine2"), c_out, c_out, 3, same, true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, skip: Var) -> Result<Var> {
        let (xs, ss) = (g.shape(x), g.shape(skip));
        if ss.h != 2 * xs.h || ss.w != 2 * xs.w {
            return Err(TensorError::ShapeMismatch {
                op: "decoder skip",
                dim: "h×w",
                got: ss.h * ss.w,
                expected: 4 * xs.h * xs.w,
            }
            .into());
        }
        let up = g.bilinear_upsample(x, ss.h, ss.w)?;
        let proj = self.skip_proj.forward(g, skip)?;
        let cat = g.concat_channels(&[up, proj])?;
        let y = self.refine1.forward(g, cat)?;
        self.refine2.forward(g, y)
    }
}

/// Fuses every decoder output at full resolution into one slice.
#[derive(Debug, Clone)]
pub struct ReconstructionHead {
    pub fuse: ConvBn,
    pub out: Conv,
}

impl ReconstructionHead {
    pub(crate) fn build(b: &mut Builder<'_>, c_in: usize, c_mid: usize) -> Result<Self> {
        Ok(Self {
            fuse: b.conv_bn("head.fuse", c_in, c_mid, 3, Conv2dOptions::same(3, 1), true)?,
            out: b.conv("head.out", c_mid, 1, 1, Conv2dOptions::default(), true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, features: &[Var], h: usize, w: usize) -> Result<Var> {
        let mut parts = Vec::with_capacity(features.len());
        for &f in features {
            let s = g.shape(f);
            parts.push(if s.h == h && s.w == w {
                f
            } else {
                g.bilinear_upsample(f, h, w)?
            });
        }
        let cat = g.concat_channels(&parts)?;
        let y = self.fuse.forward(g, cat)?;
        self.out.forward(g, y)
    }
}
