//! Forward implementations and adjoints of every tape op.

pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod loss;
pub(crate) mod norm;
pub(crate) mod spectral;

pub use elementwise::sigmoid;
pub use norm::NORM_EPS;

use crate::tape::{Op, Tape};
use crate::tensor::Scalar;

pub(crate) fn backward_node<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    match tape.node(i).op {
        Op::Leaf => {}
        Op::Conv2d { .. } | Op::MaxPool2 { .. } | Op::Upsample2(_) | Op::Concat(..) => {
            conv::backward(tape, i, g, grads)
        }
        Op::InstanceNorm { .. } | Op::LayerNorm { .. } => norm::backward(tape, i, g, grads),
        Op::Rfft2(_)
        | Op::Irfft2(_)
        | Op::ComplexMul { .. }
        | Op::ConjMul { .. }
        | Op::VarianceSpatial(_)
        | Op::DivReal { .. }
        | Op::SigmoidComplex(_)
        | Op::Lift(_) => spectral::backward(tape, i, g, grads),
        Op::Bce { .. } | Op::Dice { .. } | Op::CrossEntropy { .. } => loss::backward(tape, i, g, grads),
        _ => elementwise::backward(tape, i, g, grads),
    }
}
