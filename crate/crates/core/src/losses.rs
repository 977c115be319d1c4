//! Segmentation losses on top of the fused tape ops.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;
pub const DICE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Dice,
    #[default]
    BceDice,
    Ce,
}

/// Reject targets with entries outside `{0, 1}`.
pub fn validate_binary<T: Scalar>(target: &Tensor<T>) -> Result<()> {
    match target.data().iter().position(|&v| v != T::zero() && v != T::one()) {
        Some(i) => Err(TensorError::InvalidTarget { index: i, value: target.data()[i].as_f64() }),
        None => Ok(()),
    }
}

/// Expand a `B × 1 × H × W` map of class indices into a one-hot `B × C × H × W` tensor.
pub fn one_hot<T: Scalar>(labels: &Tensor<T>, classes: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = labels.dims4()?;
    if c != 1 {
        return Err(TensorError::Shape { op: "one_hot", lhs: vec![b, 1, h, w], rhs: labels.shape().to_vec() });
    }
    let hw = h * w;
    let mut out = Tensor::zeros(&[b, classes, h, w]);
    for (i, &v) in labels.data().iter().enumerate() {
        let k = v.as_f64();
        if k < 0.0 || k.fract() != 0.0 || k as usize >= classes {
            return Err(TensorError::InvalidTarget { index: i, value: k });
        }
        let (bi, px) = (i / hw, i % hw);
        out.data_mut()[(bi * classes + k as usize) * hw + px] = T::one();
    }
    Ok(out)
}

pub fn bce_loss<T: Scalar>(tape: &mut Tape<T>, p: Var, target: &Tensor<T>) -> Result<Var> {
    validate_binary(target)?;
    tape.bce(p, target, T::of(BCE_CLAMP))
}

pub fn dice_loss<T: Scalar>(tape: &mut Tape<T>, p: Var, target: &Tensor<T>) -> Result<Var> {
    tape.dice_loss(p, target, T::of(DICE_EPS))
}

/// `bce + λ·dice`; `λ = 1` is the plain sum.
pub fn bce_dice_loss<T: Scalar>(tape: &mut Tape<T>, p: Var, target: &Tensor<T>, lambda: f64) -> Result<Var> {
    let a = bce_loss(tape, p, target)?;
    let b = dice_loss(tape, p, target)?;
    let b = if lambda == 1.0 { b } else { tape.scale(b, T::of(lambda))? };
    tape.add(a, b)
}

/// Multi-class cross entropy against a one-hot target.
pub fn ce_multiclass<T: Scalar>(tape: &mut Tape<T>, p: Var, onehot: &Tensor<T>) -> Result<Var> {
    validate_binary(onehot)?;
    tape.cross_entropy(p, onehot, T::of(BCE_CLAMP))
}

/// Map logits to probabilities (sigmoid for one output channel, softmax
/// across channels otherwise) and apply the chosen loss. For [`LossKind::Ce`]
/// the target must be one-hot.
pub fn loss_from_logits<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    target: &Tensor<T>,
    kind: LossKind,
    lambda: f64,
) -> Result<Var> {
    let p = probabilities(tape, logits)?;
    match kind {
        LossKind::Bce => bce_loss(tape, p, target),
        LossKind::Dice => dice_loss(tape, p, target),
        LossKind::BceDice => bce_dice_loss(tape, p, target, lambda),
        LossKind::Ce => ce_multiclass(tape, p, target),
    }
}

pub fn probabilities<T: Scalar>(tape: &mut Tape<T>, logits: Var) -> Result<Var> {
    if tape.shape(logits).get(1) == Some(&1) {
        tape.sigmoid(logits)
    } else {
        tape.softmax_channels(logits)
    }
}
