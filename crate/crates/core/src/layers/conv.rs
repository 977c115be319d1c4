use rand::RngCore;

use super::in_layer;
use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore, INIT_STD};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub name: String,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl Conv2dLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.normal(&format!("{name}.w"), &[out_channels, in_channels, kernel, kernel], INIT_STD)?;
        let bias = if bias { Some(store.zeros(&format!("{name}.b"), &[out_channels])?) } else { None };
        Ok(Conv2dLayer { name: name.to_string(), weight, bias, in_channels, out_channels, kernel, pad: kernel / 2 })
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
            + if self.bias.is_some() { self.out_channels } else { 0 }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let b = self.bias.map(|id| p.var(id));
        in_layer(&self.name, tape.conv2d(x, p.var(self.weight), b, 1, self.pad))
    }
}

/// Per-sample, per-channel normalisation with a learned affine.
#[derive(Clone, Debug)]
pub struct InstanceNormLayer {
    pub name: String,
    pub gain: ParamId,
    pub bias: ParamId,
}

impl InstanceNormLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        let gain = store.ones(&format!("{name}.g"), &[channels])?;
        let bias = store.zeros(&format!("{name}.b"), &[channels])?;
        Ok(InstanceNormLayer { name: name.to_string(), gain, bias })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        in_layer(&self.name, tape.instance_norm(x, p.var(self.gain), p.var(self.bias)))
    }
}

/// `[conv3×3 → norm → relu] × 2`, with optional dropout after the first relu.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub name: String,
    pub conv1: Conv2dLayer,
    pub norm1: InstanceNormLayer,
    pub conv2: Conv2dLayer,
    pub norm2: InstanceNormLayer,
    pub dropout: Option<f64>,
}

impl ConvBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        dropout: Option<f64>,
    ) -> Result<Self> {
        Ok(ConvBlock {
            name: name.to_string(),
            conv1: Conv2dLayer::new(store, &format!("{name}.conv1"), in_channels, out_channels, 3, true)?,
            norm1: InstanceNormLayer::new(store, &format!("{name}.norm1"), out_channels)?,
            conv2: Conv2dLayer::new(store, &format!("{name}.conv2"), out_channels, out_channels, 3, true)?,
            norm2: InstanceNormLayer::new(store, &format!("{name}.norm2"), out_channels)?,
            dropout,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let y = self.conv1.forward(tape, p, x)?;
        let y = self.norm1.forward(tape, p, y)?;
        let mut y = in_layer(&self.name, tape.relu(y))?;
        if let Some(rate) = self.dropout {
            y = in_layer(&self.name, tape.dropout(y, rate, training, rng))?;
        }
        let y = self.conv2.forward(tape, p, y)?;
        let y = self.norm2.forward(tape, p, y)?;
        in_layer(&self.name, tape.relu(y))
    }
}
