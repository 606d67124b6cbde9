use rand_chacha::ChaCha8Rng;

use super::Result;
use crate::tensor::init::{truncated_gaussian, WEIGHT_STD};
use crate::tensor::{BatchNormOptions, Conv2dOptions, Graph, ParamId, ParamKind, ParamStore, Shape, Tensor, Var};

/// Registers parameters under hierarchical names and draws their initial values.
pub(crate) struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: Shape) -> Result<ParamId> {
        let value = truncated_gaussian(shape, 0.0, WEIGHT_STD, &mut self.rng)?;
        Ok(self.store.add(name, value, ParamKind::Trainable)?)
    }

    fn constant(&mut self, name: String, c: usize, value: f64, kind: ParamKind) -> Result<ParamId> {
        Ok(self
            .store
            .add(name, Tensor::full(Shape::new(1, c, 1, 1), value), kind)?)
    }

    pub fn conv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        opts: Conv2dOptions,
        bias: bool,
    ) -> Result<Conv> {
        let weight = self.weight(format!("{name}.weight"), Shape::new(c_out, c_in / opts.groups, k, k))?;
        let bias = if bias {
            Some(self.constant(format!("{name}.bias"), c_out, 0.0, ParamKind::Trainable)?)
        } else {
            None
        };
        Ok(Conv { weight, bias, opts })
    }

    pub fn batchnorm(&mut self, name: &str, c: usize) -> Result<BatchNorm> {
        Ok(BatchNorm {
            gamma: self.constant(format!("{name}.gamma"), c, 1.0, ParamKind::Trainable)?,
            beta: self.constant(format!("{name}.beta"), c, 0.0, ParamKind::Trainable)?,
            running_mean: self.constant(format!("{name}.running_mean"), c, 0.0, ParamKind::Buffer)?,
            running_var: self.constant(format!("{name}.running_var"), c, 1.0, ParamKind::Buffer)?,
        })
    }

    /// Bias-free convolution followed by batch norm, optionally by relu.
    pub fn conv_bn(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        opts: Conv2dOptions,
        relu: bool,
    ) -> Result<ConvBn> {
        Ok(ConvBn {
            conv: self.conv(&format!("{name}.conv"), c_in, c_out, k, opts, false)?,
            bn: self.batchnorm(&format!("{name}.bn"), c_out)?,
            relu,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub opts: Conv2dOptions,
}

impl Conv {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        Ok(g.conv2d(x, w, b, self.opts)?)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        Ok(g.batchnorm2d(
            x,
            gamma,
            beta,
            Some((self.running_mean, self.running_var)),
            BatchNormOptions::default(),
        )?)
    }
}

#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub relu: bool,
}

impl ConvBn {
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        let y = self.bn.forward(g, y)?;
        Ok(if self.relu { g.relu(y) } else { y })
    }
}
