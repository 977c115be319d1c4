//! Reverse-mode differentiation over a Wengert list.
//!
//! Every op appends one node holding its output and whatever it saved for
//! the adjoint. Nodes are appended in creation order, which is a valid
//! topological order, so `backward` simply walks the list in reverse.

use crate::error::{Result, TensorError};
use crate::tensor::{half_width, Scalar, Spectrum, Tensor};

/// Handle to a real-valued node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Handle to a complex half-spectrum node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpecVar(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

impl SpecVar {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<T> {
    /// Logical extents; for complex nodes the bin extents.
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// `Some(W)` marks an interleaved complex half-spectrum of a width-`W` signal.
    pub source_width: Option<usize>,
    pub requires_grad: bool,
    pub op: Op<T>,
}

pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulChannel { x: usize, gate: usize },
    Scale(usize, T),
    Reshape(usize),
    Sqrt(usize),
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize),
    Dropout { x: usize, mask: Vec<T> },
    Conv2d { x: usize, w: usize, b: Option<usize>, stride: usize, pad: usize },
    MaxPool2 { x: usize, argmax: Vec<usize> },
    Upsample2(usize),
    Concat(usize, usize),
    InstanceNorm { x: usize, gain: usize, bias: usize, xhat: Vec<T>, inv_std: Vec<T> },
    LayerNorm { x: usize, gain: usize, bias: usize, xhat: Vec<T>, inv_std: Vec<T> },
    Rfft2(usize),
    Irfft2(usize),
    ComplexMul { s: usize, w: usize },
    ConjMul { g: usize, x: usize },
    VarianceSpatial(usize),
    DivReal { s: usize, d: usize },
    SigmoidComplex(usize),
    Lift(usize),
    Bce { p: usize, target: Vec<T>, eps: T },
    Dice { p: usize, target: Vec<T>, eps: T },
    CrossEntropy { p: usize, target: Vec<T>, eps: T },
    DotConst { x: usize, w: Vec<T> },
    Sum(usize),
    Mean(usize),
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulChannel { .. } => "mul_channel",
            Op::Scale(..) => "scale",
            Op::Reshape(..) => "reshape",
            Op::Sqrt(..) => "sqrt",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softmax(..) => "softmax",
            Op::Dropout { .. } => "dropout",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2 { .. } => "max_pool2",
            Op::Upsample2(..) => "upsample2",
            Op::Concat(..) => "concat",
            Op::InstanceNorm { .. } => "instance_norm",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Rfft2(..) => "rfft2",
            Op::Irfft2(..) => "irfft2",
            Op::ComplexMul { .. } => "complex_mul",
            Op::ConjMul { .. } => "conj_mul",
            Op::VarianceSpatial(..) => "variance_spatial",
            Op::DivReal { .. } => "div_real",
            Op::SigmoidComplex(..) => "sigmoid_complex",
            Op::Lift(..) => "lift",
            Op::Bce { .. } => "bce",
            Op::Dice { .. } => "dice",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::DotConst { .. } => "dot_const",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }
}

/// Recorded computation with single ownership.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
    backward_done: bool,
    order: Vec<usize>,
    track_kinks: bool,
    kink_hash: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false, order: Vec::new(), track_kinks: false, kink_hash: FNV_OFFSET }
    }

    /// Record which side of every non-differentiable point (relu, pooling
    /// ties, probability clamps) the forward pass took; see [`Tape::kink_signature`].
    pub fn with_kink_tracking() -> Self {
        Tape { track_kinks: true, ..Self::new() }
    }

    /// Hash of all branch decisions made at non-smooth ops. Two forwards with
    /// equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        self.kink_hash
    }

    pub(crate) fn tracking_kinks(&self) -> bool {
        self.track_kinks
    }

    pub(crate) fn note_kinks(&mut self, decisions: impl Iterator<Item = u64>) {
        for d in decisions {
            self.kink_hash ^= d;
            self.kink_hash = self.kink_hash.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, false)
    }

    fn push_leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node { shape, data: t.into_data(), source_width: None, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Trainable complex leaf.
    pub fn spectrum_leaf(&mut self, s: Spectrum<T>) -> SpecVar {
        let shape = s.shape().to_vec();
        let sw = s.source_width();
        self.nodes.push(Node { shape, data: s.into_data(), source_width: Some(sw), requires_grad: true, op: Op::Leaf });
        SpecVar(self.nodes.len() - 1)
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        source_width: Option<usize>,
        op: Op<T>,
        inputs: &[usize],
    ) -> Result<usize> {
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: format!("{} (element {bad})", op.name()) });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node { shape, data, source_width, requires_grad, op });
        Ok(self.nodes.len() - 1)
    }

    pub(crate) fn push_real(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[usize]) -> Result<Var> {
        self.push(shape, data, None, op, inputs).map(Var)
    }

    pub(crate) fn push_complex(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        source_width: usize,
        op: Op<T>,
        inputs: &[usize],
    ) -> Result<SpecVar> {
        debug_assert_eq!(shape[3], half_width(source_width));
        self.push(shape, data, Some(source_width), op, inputs).map(SpecVar)
    }

    pub(crate) fn node(&self, i: usize) -> &Node<T> {
        &self.nodes[i]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.data.clone()).expect("node shape is consistent")
    }

    pub fn spectrum_shape(&self, s: SpecVar) -> [usize; 4] {
        let sh = &self.nodes[s.0].shape;
        [sh[0], sh[1], sh[2], sh[3]]
    }

    pub fn spectrum(&self, s: SpecVar) -> Spectrum<T> {
        let n = &self.nodes[s.0];
        Spectrum::new(self.spectrum_shape(s), n.source_width.expect("complex node"), n.data.clone())
            .expect("node shape is consistent")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn dims4(&self, v: usize, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.nodes[v].shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            ref s => Err(TensorError::Shape { op, lhs: s.to_vec(), rhs: vec![0, 0, 0, 0] }),
        }
    }

    /// Op nodes (leaves excluded) visited by the most recent `backward`, in visit order.
    pub fn backward_order(&self) -> &[usize] {
        &self.order
    }

    /// Propagate adjoints from the scalar `root` back to every node that
    /// requires a gradient.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let n = &self.nodes[root.0];
        if n.data.len() != 1 || n.source_width.is_some() {
            return Err(TensorError::NonScalarRoot(n.shape.clone()));
        }
        self.backward_done = true;
        self.order.clear();
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.order.push(i);
                crate::ops::backward_node(self, i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.shape.clone()).collect() })
    }

    /// Zero-initialized gradient buffer for input `i`, or `None` when `i`
    /// does not require a gradient.
    pub(crate) fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], i: usize) -> Option<&'g mut Vec<T>> {
        if !self.nodes[i].requires_grad {
            return None;
        }
        let len = self.nodes[i].data.len();
        Some(grads[i].get_or_insert_with(|| vec![T::zero(); len]))
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a real node, shaped like the node.
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].as_ref().map(|g| Tensor::new(&self.shapes[v.0], g.clone()).expect("grad shape"))
    }

    pub fn raw(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Interleaved `(∂/∂re, ∂/∂im)` pairs of a complex node.
    pub fn spectrum(&self, s: SpecVar) -> Option<&[T]> {
        self.grads[s.0].as_deref()
    }

    /// Gradient or zeros when the node was not reached.
    pub fn get_or_zeros(&self, v: Var) -> Tensor<T> {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}
