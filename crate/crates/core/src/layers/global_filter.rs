use super::in_layer;
use crate::error::{Result, TensorError};
use crate::params::{Bound, ParamId, ParamStore, INIT_STD};
use crate::tape::{SpecVar, Tape, Var};
use crate::tensor::{half_width, Scalar};

/// Learnable complex filter multiplied onto the half-spectrum of its input.
///
/// The weight is a real `C × H × (W/2+1) × 2` tensor holding `(re, im)` per
/// bin and is shared across the batch.
#[derive(Clone, Debug)]
pub struct GlobalFilterLayer {
    pub name: String,
    pub weight: ParamId,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl GlobalFilterLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let shape = [channels, height, half_width(width), 2];
        let weight = store.normal(&format!("{name}.complex_weight"), &shape, INIT_STD)?;
        Ok(GlobalFilterLayer { name: name.to_string(), weight, channels, height, width })
    }

    /// `2·C·H·(W/2+1)` real parameters.
    pub fn param_count(&self) -> usize {
        2 * self.channels * self.height * half_width(self.width)
    }

    /// Returns the filtered signal and the filtered spectrum it came from.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<(Var, SpecVar)> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 4 || shape[1..] != [self.channels, self.height, self.width] {
            return Err(TensorError::Shape {
                op: "global_filter",
                lhs: vec![self.channels, self.height, self.width],
                rhs: shape,
            });
        }
        let s = in_layer(&self.name, tape.rfft2(x))?;
        let freq = in_layer(&self.name, tape.complex_mul(s, p.var(self.weight)))?;
        let out = in_layer(&self.name, tape.irfft2(freq, self.height, self.width))?;
        Ok((out, freq))
    }
}
