use super::conv::Conv2dLayer;
use super::in_layer;
use crate::error::{Result, TensorError};
use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// Additive attention gate: `α = σ(ψ(relu(W_g·g + W_x·x + b)))`, output `α·x`.
#[derive(Clone, Debug)]
pub struct AttentionGateLayer {
    pub name: String,
    pub w_g: Conv2dLayer,
    pub w_x: Conv2dLayer,
    pub psi: Conv2dLayer,
    pub f_int: usize,
}

impl AttentionGateLayer {
    /// `f_g` channels in the gating signal, `f_l` in the skip, `f_int` in the
    /// joint projection.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, f_g: usize, f_l: usize, f_int: usize) -> Result<Self> {
        Ok(AttentionGateLayer {
            name: name.to_string(),
            w_g: Conv2dLayer::new(store, &format!("{name}.w_g"), f_g, f_int, 1, true)?,
            w_x: Conv2dLayer::new(store, &format!("{name}.w_x"), f_l, f_int, 1, false)?,
            psi: Conv2dLayer::new(store, &format!("{name}.psi"), f_int, 1, 1, true)?,
            f_int,
        })
    }

    pub fn param_count(&self) -> usize {
        self.w_g.param_count() + self.w_x.param_count() + self.psi.param_count()
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, g: Var, x: Var) -> Result<Var> {
        Ok(self.forward_with_alpha(tape, p, g, x)?.0)
    }

    /// Gated output together with the one-channel coefficient map `α`.
    pub fn forward_with_alpha<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, g: Var, x: Var) -> Result<(Var, Var)> {
        let (gs, xs) = (tape.shape(g), tape.shape(x));
        if gs.len() != 4 || xs.len() != 4 || gs[0] != xs[0] || gs[2..] != xs[2..] {
            return Err(TensorError::Shape { op: "attention_gate", lhs: gs.to_vec(), rhs: xs.to_vec() });
        }
        let a = self.w_g.forward(tape, p, g)?;
        let b = self.w_x.forward(tape, p, x)?;
        let s = in_layer(&self.name, tape.add(a, b))?;
        let r = in_layer(&self.name, tape.relu(s))?;
        let logit = self.psi.forward(tape, p, r)?;
        let alpha = in_layer(&self.name, tape.sigmoid(logit))?;
        let out = in_layer(&self.name, tape.mul_channel(x, alpha))?;
        Ok((out, alpha))
    }
}
