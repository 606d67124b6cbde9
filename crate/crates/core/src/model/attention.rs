//! Concurrent spatial and channel squeeze-and-excitation.

use super::layers::{Builder, Conv};
use super::Result;
use crate::tensor::{Conv2dOptions, Graph, Var};

/// Channel gate: global pool, bottleneck MLP, sigmoid.
#[derive(Debug, Clone)]
pub struct ChannelSe {
    pub reduce: Conv,
    pub expand: Conv,
}

impl ChannelSe {
    pub(crate) fn build(b: &mut Builder<'_>, name: &str, channels: usize, reduction: usize) -> Result<Self> {
        let hidden = (channels / reduction).max(1);
        let opts = Conv2dOptions::default();
        Ok(Self {
            reduce: b.conv(&format!("{name}.reduce"), channels, hidden, 1, opts, true)?,
            expand: b.conv(&format!("{name}.expand"), hidden, channels, 1, opts, true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let z = g.global_avg_pool(x);
        let z = self.reduce.forward(g, z)?;
        let z = g.relu(z);
        let z = self.expand.forward(g, z)?;
        let s = g.sigmoid(z);
        Ok(g.mul_broadcast(x, s)?)
    }
}

/// Spatial gate: 1×1 projection to one map, sigmoid.
#[derive(Debug, Clone)]
pub struct SpatialSe {
    pub squeeze: Conv,
}

impl SpatialSe {
    pub(crate) fn build(b: &mut Builder<'_>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            squeeze: b.conv(
                &format!("{name}.squeeze"),
                channels,
                1,
                1,
                Conv2dOptions::default(),
                true,
            )?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let q = self.squeeze.forward(g, x)?;
        let q = g.sigmoid(q);
        Ok(g.mul_broadcast(x, q)?)
    }
}

/// Sum of the channel-gated and spatially-gated feature maps.
#[derive(Debug, Clone)]
pub struct Scse {
    pub channel: ChannelSe,
    pub spatial: SpatialSe,
}

impl Scse {
    pub(crate) fn build(b: &mut Builder<'_>, name: &str, channels: usize, reduction: usize) -> Result<Self> {
        Ok(Self {
            channel: ChannelSe::build(b, &format!("{name}.cse"), channels, reduction)?,
            spatial: SpatialSe::build(b, &format!("{name}.sse"), channels)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let c = self.channel.forward(g, x)?;
        let s = self.spatial.forward(g, x)?;
        Ok(g.add(c, s)?)
    }
}
