use serde::{Deserialize, Serialize};

use super::global_filter::GlobalFilterLayer;
use super::in_layer;
use crate::error::{Result, TensorError};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{SpecVar, Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// How the per-bin score becomes an attention value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateScoring {
    /// `σ(|z|)·cos(angle z)` per bin.
    #[default]
    SigmoidComplex,
    /// The complex sigmoid followed by a softmax across all bins of each
    /// `(sample, channel)` plane, rescaled so the plane averages to one.
    SoftmaxBins,
}

/// Frequency-domain attention gate.
///
/// Both inputs go through their own [`GlobalFilterLayer`]. The score per bin
/// is `conj(G)·X / √(2π·var(G))`, where `var` is the spatial variance of the
/// filtered gating spectrum for that sample and channel. The scored field is
/// brought back to the spatial domain and added to `x` under a layer norm.
#[derive(Clone, Debug)]
pub struct AttentionFilterGateLayer {
    pub name: String,
    pub filter_g: GlobalFilterLayer,
    pub filter_x: GlobalFilterLayer,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub f_g: usize,
    pub f_l: usize,
    pub f_int: usize,
    pub scoring: GateScoring,
    /// Added to the spectral variance before the square root. Zero keeps the
    /// strict behaviour, where a constant gating plane is an error.
    pub variance_eps: f64,
}

/// Every intermediate of one gate forward.
#[derive(Clone, Copy, Debug)]
pub struct FilterGateTrace {
    pub g_spatial: Var,
    pub x_spatial: Var,
    pub g_freq: SpecVar,
    pub x_freq: SpecVar,
    pub norm_freq: Var,
    pub score: SpecVar,
    pub atten: Var,
    pub inverse_atten: Var,
    pub out: Var,
}

impl AttentionFilterGateLayer {
    /// The binwise product pairs channels one to one, so `f_g` must equal
    /// `f_l`. `f_int` is carried as configuration only.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        f_g: usize,
        f_l: usize,
        f_int: usize,
        height: usize,
        width: usize,
        scoring: GateScoring,
    ) -> Result<Self> {
        if f_g != f_l {
            return Err(TensorError::Invalid(format!(
                "filter gate needs matching gate and skip channels, got {f_g} and {f_l}"
            )));
        }
        Ok(AttentionFilterGateLayer {
            name: name.to_string(),
            filter_g: GlobalFilterLayer::new(store, &format!("{name}.filter_g"), f_g, height, width)?,
            filter_x: GlobalFilterLayer::new(store, &format!("{name}.filter_x"), f_l, height, width)?,
            norm_gain: store.ones(&format!("{name}.norm.g"), &[f_l])?,
            norm_bias: store.zeros(&format!("{name}.norm.b"), &[f_l])?,
            f_g,
            f_l,
            f_int,
            scoring,
            variance_eps: 0.0,
        })
    }

    pub fn with_variance_eps(mut self, eps: f64) -> Self {
        self.variance_eps = eps;
        self
    }

    pub fn param_count(&self) -> usize {
        self.filter_g.param_count() + self.filter_x.param_count() + 2 * self.f_l
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, g: Var, x: Var) -> Result<Var> {
        Ok(self.trace(tape, p, g, x)?.out)
    }

    pub fn trace<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, g: Var, x: Var) -> Result<FilterGateTrace> {
        if tape.shape(g) != tape.shape(x) {
            return Err(TensorError::Shape {
                op: "attention_filter_gate",
                lhs: tape.shape(g).to_vec(),
                rhs: tape.shape(x).to_vec(),
            });
        }
        let (h, w) = (self.filter_x.height, self.filter_x.width);
        let (g_spatial, g_freq) = self.filter_g.forward(tape, p, g)?;
        let (x_spatial, x_freq) = self.filter_x.forward(tape, p, x)?;

        let norm_freq = in_layer(&self.name, tape.variance_spatial(g_freq))?;
        let guarded = if self.variance_eps > 0.0 {
            let eps = tape.constant(Tensor::full(tape.shape(norm_freq), T::of(self.variance_eps)));
            in_layer(&self.name, tape.add(norm_freq, eps))?
        } else {
            if let Some(k) = tape.data(norm_freq).iter().position(|v| *v == T::zero()) {
                return Err(TensorError::DegenerateVariance { sample: k / self.f_g, channel: k % self.f_g });
            }
            norm_freq
        };
        let two_pi_var = in_layer(&self.name, tape.scale(guarded, T::of(2.0 * std::f64::consts::PI)))?;
        let denom = in_layer(&self.name, tape.sqrt(two_pi_var))?;
        let product = in_layer(&self.name, tape.conj_mul(g_freq, x_freq))?;
        let score = in_layer(&self.name, tape.div_real(product, denom))?;

        let mut atten = in_layer(&self.name, tape.sigmoid_complex(score))?;
        if self.scoring == GateScoring::SoftmaxBins {
            let shape = tape.shape(atten).to_vec();
            let bins = shape[2] * shape[3];
            let flat = in_layer(&self.name, tape.reshape(atten, &[shape[0] * shape[1], bins, 1, 1]))?;
            let soft = in_layer(&self.name, tape.softmax_channels(flat))?;
            let soft = in_layer(&self.name, tape.scale(soft, T::of(bins as f64)))?;
            atten = in_layer(&self.name, tape.reshape(soft, &shape))?;
        }

        let lifted = in_layer(&self.name, tape.lift(atten, w))?;
        let inverse_atten = in_layer(&self.name, tape.irfft2(lifted, h, w))?;
        let residual = in_layer(&self.name, tape.add(x, inverse_atten))?;
        let out = in_layer(&self.name, tape.layer_norm(residual, p.var(self.norm_gain), p.var(self.norm_bias)))?;
        Ok(FilterGateTrace { g_spatial, x_spatial, g_freq, x_freq, norm_freq, score, atten, inverse_atten, out })
    }
}
