use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Scalar;

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape { op, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push_real(self.shape(a).to_vec(), out, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push_real(self.shape(a).to_vec(), out, Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push_real(self.shape(a).to_vec(), out, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// `x * gate` where `gate` has a single channel broadcast over `x`'s channels.
    pub fn mul_channel(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(x.0, "mul_channel")?;
        let (gb, gc, gh, gw) = self.dims4(gate.0, "mul_channel")?;
        if (gb, gc, gh, gw) != (b, 1, h, w) {
            return Err(TensorError::Shape { op: "mul_channel", lhs: vec![b, c, h, w], rhs: vec![gb, gc, gh, gw] });
        }
        let xs = self.data(x);
        let gs = self.data(gate);
        let hw = h * w;
        let mut out = vec![T::zero(); xs.len()];
        for bi in 0..b {
            let gp = &gs[bi * hw..(bi + 1) * hw];
            for ci in 0..c {
                let o = (bi * c + ci) * hw;
                for p in 0..hw {
                    out[o + p] = xs[o + p] * gp[p];
                }
            }
        }
        self.push_real(vec![b, c, h, w], out, Op::MulChannel { x: x.0, gate: gate.0 }, &[x.0, gate.0])
    }

    pub fn scale(&mut self, a: Var, k: T) -> Result<Var> {
        let out = self.data(a).iter().map(|&v| v * k).collect();
        self.push_real(self.shape(a).to_vec(), out, Op::Scale(a.0, k), &[a.0])
    }

    /// Same data under a new shape of equal element count.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.data(a).len() || shape.len() > crate::tensor::MAX_RANK {
            return Err(TensorError::Shape { op: "reshape", lhs: self.shape(a).to_vec(), rhs: shape.to_vec() });
        }
        let out = self.data(a).to_vec();
        self.push_real(shape.to_vec(), out, Op::Reshape(a.0), &[a.0])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|&v| v.sqrt()).collect();
        self.push_real(self.shape(a).to_vec(), out, Op::Sqrt(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out: Vec<T> = self.data(a).iter().map(|&v| v.max(T::zero())).collect();
        if self.tracking_kinks() {
            let mask: Vec<u64> = self.data(a).iter().map(|&v| (v > T::zero()) as u64).collect();
            self.note_kinks(mask.into_iter());
        }
        self.push_real(self.shape(a).to_vec(), out, Op::Relu(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|&v| sigmoid(v)).collect();
        self.push_real(self.shape(a).to_vec(), out, Op::Sigmoid(a.0), &[a.0])
    }

    /// Softmax over the channel axis of a rank-4 tensor.
    pub fn softmax_channels(&mut self, a: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(a.0, "softmax")?;
        let xs = self.data(a);
        let hw = h * w;
        let mut out = vec![T::zero(); xs.len()];
        for bi in 0..b {
            for p in 0..hw {
                let idx = |ci: usize| (bi * c + ci) * hw + p;
                let m = (0..c).map(|ci| xs[idx(ci)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for ci in 0..c {
                    let e = (xs[idx(ci)] - m).exp();
                    out[idx(ci)] = e;
                    z = z + e;
                }
                for ci in 0..c {
                    out[idx(ci)] = out[idx(ci)] / z;
                }
            }
        }
        self.push_real(vec![b, c, h, w], out, Op::Softmax(a.0), &[a.0])
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1/(1-p)`. Identity when not training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> =
            (0..self.data(a).len()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
        let out = self.data(a).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push_real(self.shape(a).to_vec(), out, Op::Dropout { x: a.0, mask }, &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().fold(T::zero(), |acc, &v| acc + v);
        self.push_real(vec![1], vec![s], Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = T::of(self.data(a).len() as f64);
        let s = self.data(a).iter().fold(T::zero(), |acc, &v| acc + v);
        self.push_real(vec![1], vec![s / n], Op::Mean(a.0), &[a.0])
    }

    /// Scalar `Σ aᵢ·wᵢ` against constant weights.
    pub fn dot_const(&mut self, a: Var, w: &[T]) -> Result<Var> {
        if w.len() != self.data(a).len() {
            return Err(TensorError::Shape { op: "dot_const", lhs: self.shape(a).to_vec(), rhs: vec![w.len()] });
        }
        let s = self.data(a).iter().zip(w).fold(T::zero(), |acc, (&v, &k)| acc + v * k);
        self.push_real(vec![1], vec![s], Op::DotConst { x: a.0, w: w.to_vec() }, &[a.0])
    }
}

pub(crate) fn backward<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = tape.node(i);
    match &node.op {
        Op::Add(a, b) => {
            for (&src, sign) in [(a, T::one()), (b, T::one())] {
                if let Some(d) = tape.grad_slot(grads, src) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + sign * g);
                }
            }
        }
        Op::Sub(a, b) => {
            for (&src, sign) in [(a, T::one()), (b, -T::one())] {
                if let Some(d) = tape.grad_slot(grads, src) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + sign * g);
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (tape.node(*a).data.clone(), tape.node(*b).data.clone());
            if let Some(d) = tape.grad_slot(grads, *a) {
                d.iter_mut().zip(g).zip(&bv).for_each(|((d, &g), &y)| *d = *d + g * y);
            }
            if let Some(d) = tape.grad_slot(grads, *b) {
                d.iter_mut().zip(g).zip(&av).for_each(|((d, &g), &x)| *d = *d + g * x);
            }
        }
        &Op::MulChannel { x, gate } => {
            let [b, c, h, w] = [node.shape[0], node.shape[1], node.shape[2], node.shape[3]];
            let hw = h * w;
            let xs = &tape.node(x).data;
            let gs = &tape.node(gate).data;
            if let Some(d) = tape.grad_slot(grads, x) {
                for bi in 0..b {
                    for ci in 0..c {
                        let o = (bi * c + ci) * hw;
                        for p in 0..hw {
                            d[o + p] = d[o + p] + g[o + p] * gs[bi * hw + p];
                        }
                    }
                }
            }
            if let Some(d) = tape.grad_slot(grads, gate) {
                for bi in 0..b {
                    for ci in 0..c {
                        let o = (bi * c + ci) * hw;
                        for p in 0..hw {
                            d[bi * hw + p] = d[bi * hw + p] + g[o + p] * xs[o + p];
                        }
                    }
                }
            }
        }
        &Op::Scale(a, k) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g * k);
            }
        }
        &Op::Reshape(a) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
            }
        }
        &Op::Sqrt(a) => {
            let two = T::of(2.0);
            if let Some(d) = tape.grad_slot(grads, a) {
                d.iter_mut().zip(g).zip(&node.data).for_each(|((d, &g), &y)| *d = *d + g / (two * y));
            }
        }
        &Op::Relu(a) => {
            let xs = &tape.node(a).data;
            if let Some(d) = tape.grad_slot(grads, a) {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(xs) {
                    if x > T::zero() {
                        *d = *d + g;
                    }
                }
            }
        }
        &Op::Sigmoid(a) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                d.iter_mut().zip(g).zip(&node.data).for_each(|((d, &g), &y)| *d = *d + g * y * (T::one() - y));
            }
        }
        &Op::Softmax(a) => {
            let [b, c, h, w] = [node.shape[0], node.shape[1], node.shape[2], node.shape[3]];
            let hw = h * w;
            let ys = &node.data;
            if let Some(d) = tape.grad_slot(grads, a) {
                for bi in 0..b {
                    for p in 0..hw {
                        let idx = |ci: usize| (bi * c + ci) * hw + p;
                        let dot = (0..c).fold(T::zero(), |acc, ci| acc + g[idx(ci)] * ys[idx(ci)]);
                        for ci in 0..c {
                            d[idx(ci)] = d[idx(ci)] + ys[idx(ci)] * (g[idx(ci)] - dot);
                        }
                    }
                }
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(d) = tape.grad_slot(grads, *x) {
                d.iter_mut().zip(g).zip(mask).for_each(|((d, &g), &m)| *d = *d + g * m);
            }
        }
        &Op::Sum(a) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                d.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        &Op::Mean(a) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                let gm = g[0] / T::of(d.len() as f64);
                d.iter_mut().for_each(|d| *d = *d + gm);
            }
        }
        Op::DotConst { x, w } => {
            if let Some(d) = tape.grad_slot(grads, *x) {
                d.iter_mut().zip(w).for_each(|(d, &k)| *d = *d + g[0] * k);
            }
        }
        _ => unreachable!("not an elementwise op"),
    }
}
