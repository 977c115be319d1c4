use crate::error::{Result, TensorError};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Scalar;

/// Variance floor inside the square root of both normalizations.
pub const NORM_EPS: f64 = 1e-5;

/// Standardize each contiguous group of `group` values in `xs`.
fn standardize<T: Scalar>(xs: &[T], group: usize) -> (Vec<T>, Vec<T>) {
    let eps = T::of(NORM_EPS);
    let n = T::of(group as f64);
    let mut xhat = vec![T::zero(); xs.len()];
    let mut inv_std = Vec::with_capacity(xs.len() / group);
    for (src, dst) in xs.chunks(group).zip(xhat.chunks_mut(group)) {
        let mean = src.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = src.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let is = T::one() / (var + eps).sqrt();
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = (v - mean) * is;
        }
        inv_std.push(is);
    }
    (xhat, inv_std)
}

/// Adjoint of `standardize` for one group: `dx = σ⁻¹(dx̂ − mean(dx̂) − x̂·mean(dx̂·x̂))`.
fn standardize_backward<T: Scalar>(dxhat: &[T], xhat: &[T], inv_std: T, dx: &mut [T]) {
    let n = T::of(dxhat.len() as f64);
    let m1 = dxhat.iter().fold(T::zero(), |a, &v| a + v) / n;
    let m2 = dxhat.iter().zip(xhat).fold(T::zero(), |a, (&d, &x)| a + d * x) / n;
    for ((o, &d), &x) in dx.iter_mut().zip(dxhat).zip(xhat) {
        *o = *o + inv_std * (d - m1 - x * m2);
    }
}

impl<T: Scalar> Tape<T> {
    fn check_affine(&self, x: Var, gain: Var, bias: Var, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        let dims = self.dims4(x.0, op)?;
        for p in [gain, bias] {
            if self.data(p).len() != dims.1 {
                return Err(TensorError::Shape { op, lhs: vec![dims.1], rhs: self.shape(p).to_vec() });
            }
        }
        Ok(dims)
    }

    fn affine(&self, xhat: &[T], gain: Var, bias: Var, c: usize, hw: usize) -> Vec<T> {
        let (gs, bs) = (self.data(gain), self.data(bias));
        xhat.iter()
            .enumerate()
            .map(|(i, &v)| {
                let ci = (i / hw) % c;
                gs[ci] * v + bs[ci]
            })
            .collect()
    }

    /// Per-sample, per-channel normalization over the spatial axes, then a
    /// per-channel affine.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (b, c, h, w) = self.check_affine(x, gain, bias, "instance_norm")?;
        let (xhat, inv_std) = standardize(self.data(x), h * w);
        let out = self.affine(&xhat, gain, bias, c, h * w);
        self.push_real(
            vec![b, c, h, w],
            out,
            Op::InstanceNorm { x: x.0, gain: gain.0, bias: bias.0, xhat, inv_std },
            &[x.0, gain.0, bias.0],
        )
    }

    /// Per-sample normalization over channel and spatial axes together, then a
    /// per-channel affine.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (b, c, h, w) = self.check_affine(x, gain, bias, "layer_norm")?;
        let (xhat, inv_std) = standardize(self.data(x), c * h * w);
        let out = self.affine(&xhat, gain, bias, c, h * w);
        self.push_real(
            vec![b, c, h, w],
            out,
            Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, xhat, inv_std },
            &[x.0, gain.0, bias.0],
        )
    }
}

pub(crate) fn backward<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = tape.node(i);
    let (c, hw) = (node.shape[1], node.shape[2] * node.shape[3]);
    let (x, gain, bias, xhat, inv_std, group) = match &node.op {
        Op::InstanceNorm { x, gain, bias, xhat, inv_std } => (*x, *gain, *bias, xhat, inv_std, hw),
        Op::LayerNorm { x, gain, bias, xhat, inv_std } => (*x, *gain, *bias, xhat, inv_std, c * hw),
        _ => unreachable!("not a norm op"),
    };
    let gs = &tape.node(gain).data;
    if let Some(d) = tape.grad_slot(grads, x) {
        let dxhat: Vec<T> = g.iter().enumerate().map(|(j, &v)| v * gs[(j / hw) % c]).collect();
        for (k, ((dh, xh), dx)) in dxhat.chunks(group).zip(xhat.chunks(group)).zip(d.chunks_mut(group)).enumerate() {
            standardize_backward(dh, xh, inv_std[k], dx);
        }
    }
    if let Some(d) = tape.grad_slot(grads, gain) {
        for (j, (&gv, &xh)) in g.iter().zip(xhat).enumerate() {
            let ci = (j / hw) % c;
            d[ci] = d[ci] + gv * xh;
        }
    }
    if let Some(d) = tape.grad_slot(grads, bias) {
        for (j, &gv) in g.iter().enumerate() {
            let ci = (j / hw) % c;
            d[ci] = d[ci] + gv;
        }
    }
}
