use super::attention::Scse;
use super::layers::{Builder, Conv, ConvBn};
use super::{ModelConfig, Result, EXPANSION, TRIPLET};
use crate::tensor::{Conv2dOptions, Graph, Var};

/// Two 3×3 conv-BN-ReLU layers; the first halves the resolution.
#[derive(Debug, Clone)]
pub struct Stem {
    pub down: ConvBn,
    pub refine: ConvBn,
}

impl Stem {
    fn build(b: &mut Builder<'_>, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            down: b.conv_bn(
                "stem.down",
                c_in,
                c_out,
                3,
                Conv2dOptions::same(3, 1).with_stride(2),
                true,
            )?,
            refine: b.conv_bn("stem.refine", c_out, c_out, 3, Conv2dOptions::same(3, 1), true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.down.forward(g, x)?;
        self.refine.forward(g, y)
    }
}

/// 1×1 reduce, 3×3 (strided), 1×1 expand, scSE on the residual branch,
/// identity or projection shortcut.
#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub reduce: ConvBn,
    pub spatial: ConvBn,
    pub expand: ConvBn,
    pub scse: Scse,
    pub shortcut: Option<ConvBn>,
}

impl Bottleneck {
    fn build(
        b: &mut Builder<'_>,
        name: &str,
        c_in: usize,
        width: usize,
        stride: usize,
        se_reduction: usize,
    ) -> Result<Self> {
        let c_out = width * EXPANSION;
        let pw = Conv2dOptions::default();
        let shortcut = if stride != 1 || c_in != c_out {
            Some(b.conv_bn(
                &format!("{name}.shortcut"),
                c_in,
                c_out,
                1,
                pw.with_stride(stride),
                false,
            )?)
        } else {
            None
        };
        Ok(Self {
            reduce: b.conv_bn(&format!("{name}.reduce"), c_in, width, 1, pw, true)?,
            spatial: b.conv_bn(
                &format!("{name}.spatial"),
                width,
                width,
                3,
                Conv2dOptions::same(3, 1).with_stride(stride),
                true,
            )?,
            expand: b.conv_bn(&format!("{name}.expand"), width, c_out, 1, pw, false)?,
            scse: Scse::build(b, &format!("{name}.scse"), c_out, se_reduction)?,
            shortcut,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let r = self.reduce.forward(g, x)?;
        let r = self.spatial.forward(g, r)?;
        let r = self.expand.forward(g, r)?;
        let r = self.scse.forward(g, r)?;
        let s = match &self.shortcut {
            Some(p) => p.forward(g, x)?,
            None => x,
        };
        let y = g.add(r, s)?;
        Ok(g.relu(y))
    }
}

/// Depthwise dilated 3×3 followed by pointwise conv-BN-ReLU.
#[derive(Debug, Clone)]
pub struct SeparableBranch {
    pub depthwise: Conv,
    pub pointwise: ConvBn,
}

impl SeparableBranch {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.depthwise.forward(g, x)?;
        self.pointwise.forward(g, y)
    }
}

/// Atrous spatial pyramid pooling with depthwise-separable atrous branches.
#[derive(Debug, Clone)]
pub struct Aspp {
    pub pointwise: ConvBn,
    pub atrous: Vec<SeparableBranch>,
    pub pool: Conv,
    pub project: ConvBn,
}

impl Aspp {
    fn build(b: &mut Builder<'_>, c_in: usize, c_out: usize, rates: &[usize]) -> Result<Self> {
        let pw = Conv2dOptions::default();
        let atrous = rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                Ok(SeparableBranch {
                    depthwise: b.conv(
                        &format!("aspp.atrous{i}.depthwise"),
                        c_in,
                        c_in,
                        3,
                        Conv2dOptions::same(3, r).with_groups(c_in),
                        false,
                    )?,
                    pointwise: b.conv_bn(&format!("aspp.atrous{i}.pointwise"), c_in, c_out, 1, pw, true)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let branches = rates.len() + 2;
        Ok(Self {
            pointwise: b.conv_bn("aspp.pointwise", c_in, c_out, 1, pw, true)?,
            atrous,
            pool: b.conv("aspp.pool", c_in, c_out, 1, pw, true)?,
            project: b.conv_bn("aspp.project", branches * c_out, c_out, 1, pw, true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let s = g.shape(x);
        let mut parts = vec![self.pointwise.forward(g, x)?];
        for branch in &self.atrous {
            parts.push(branch.forward(g, x)?);
        }
        let p = g.global_avg_pool(x);
        let p = self.pool.forward(g, p)?;
        let p = g.relu(p);
        parts.push(g.bilinear_upsample(p, s.h, s.w)?);
        let cat = g.concat_channels(&parts)?;
        self.project.forward(g, cat)
    }
}

/// Feature maps the decoder consumes.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutputs {
    /// Stem output at stride 2.
    pub stem: Var,
    /// Outputs of the four residual stages, strides 2, 4, 8 and 16.
    pub stages: [Var; 4],
    /// ASPP output at stride 16.
    pub bottom: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub stem: Stem,
    pub stages: [Vec<Bottleneck>; 4],
    pub aspp: Aspp,
}

impl Encoder {
    pub(crate) fn build(b: &mut Builder<'_>, cfg: &ModelConfig) -> Result<Self> {
        let stem_c = cfg.scaled(cfg.stem_channels);
        let stem = Stem::build(b, TRIPLET, stem_c)?;
        let mut c_in = stem_c;
        let mut stages: [Vec<Bottleneck>; 4] = Default::default();
        for (s, stage) in stages.iter_mut().enumerate() {
            let width = cfg.scaled(cfg.stage_channels[s]);
            for i in 0..cfg.stage_block_counts[s] {
                let stride = if i == 0 && s > 0 { 2 } else { 1 };
                let name = format!("encoder.stage{}.block{i}", s + 1);
                stage.push(Bottleneck::build(b, &name, c_in, width, stride, cfg.se_reduction)?);
                c_in = width * EXPANSION;
            }
        }
        let aspp = Aspp::build(b, c_in, cfg.scaled(cfg.aspp_channels), &cfg.aspp_rates)?;
        Ok(Self { stem, stages, aspp })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<EncoderOutputs> {
        let stem = self.stem.forward(g, x)?;
        let mut h = stem;
        let mut stages = [stem; 4];
        for (s, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                h = block.forward(g, h)?;
            }
            stages[s] = h;
        }
        let bottom = self.aspp.forward(g, h)?;
        Ok(EncoderOutputs { stem, stages, bottom })
    }
}
