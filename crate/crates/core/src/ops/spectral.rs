//! Differentiable frequency-domain ops on interleaved half-spectra.
//!
//! Complex gradients are stored as `(∂L/∂re, ∂L/∂im)` pairs. With that
//! convention the adjoint of `z ↦ z·w` is `G·conj(w)`.

use crate::activations::{sigmoid_complex_grad, sigmoid_complex_parts};
use crate::error::{Result, TensorError};
use crate::fft::{column_weight, irfft2_plane, rfft2_adjoint_plane, rfft2_plane};
use crate::tape::{Op, SpecVar, Tape, Var};
use crate::tensor::{half_width, Scalar};

impl<T: Scalar> Tape<T> {
    fn source_width(&self, s: SpecVar) -> usize {
        self.node(s.0).source_width.expect("complex node")
    }

    /// Orthonormal real 2D FFT over the spatial axes.
    pub fn rfft2(&mut self, x: Var) -> Result<SpecVar> {
        let (b, c, h, w) = self.dims4(x.0, "rfft2")?;
        if h == 0 || w == 0 {
            return Err(TensorError::Invalid("rfft2 needs non-empty spatial axes".into()));
        }
        let wh = half_width(w);
        let mut out = vec![T::zero(); 2 * b * c * h * wh];
        for (plane, dst) in self.data(x).chunks(h * w).zip(out.chunks_mut(2 * h * wh)) {
            rfft2_plane(plane, h, w, dst);
        }
        self.push_complex(vec![b, c, h, wh], out, w, Op::Rfft2(x.0), &[x.0])
    }

    /// Inverse of [`Tape::rfft2`] back to an `out_h × out_w` real signal.
    pub fn irfft2(&mut self, s: SpecVar, out_h: usize, out_w: usize) -> Result<Var> {
        let [b, c, h, wh] = self.spectrum_shape(s);
        if h != out_h || wh != half_width(out_w) {
            return Err(TensorError::Shape { op: "irfft2", lhs: vec![h, wh], rhs: vec![out_h, half_width(out_w)] });
        }
        let mut out = vec![T::zero(); b * c * out_h * out_w];
        for (plane, dst) in self.node(s.0).data.chunks(2 * h * wh).zip(out.chunks_mut(out_h * out_w)) {
            irfft2_plane(plane, out_h, out_w, dst);
        }
        self.push_real(vec![b, c, out_h, out_w], out, Op::Irfft2(s.0), &[s.0])
    }

    /// Elementwise product with per-channel complex weights stored as a real
    /// `C × H × Wh × 2` tensor, broadcast over the batch.
    pub fn complex_mul(&mut self, s: SpecVar, w: Var) -> Result<SpecVar> {
        let [b, c, h, wh] = self.spectrum_shape(s);
        if self.shape(w) != [c, h, wh, 2] {
            return Err(TensorError::Shape { op: "complex_mul", lhs: vec![c, h, wh, 2], rhs: self.shape(w).to_vec() });
        }
        let (sd, wd) = (&self.node(s.0).data, self.data(w));
        let per = 2 * c * h * wh;
        let mut out = vec![T::zero(); sd.len()];
        for bi in 0..b {
            for j in (0..per).step_by(2) {
                let (a, bb) = (sd[bi * per + j], sd[bi * per + j + 1]);
                let (cc, d) = (wd[j], wd[j + 1]);
                out[bi * per + j] = a * cc - bb * d;
                out[bi * per + j + 1] = a * d + bb * cc;
            }
        }
        let sw = self.source_width(s);
        self.push_complex(vec![b, c, h, wh], out, sw, Op::ComplexMul { s: s.0, w: w.0 }, &[s.0, w.0])
    }

    /// `conj(g) · x`, binwise: a frequency-domain cross-correlation.
    pub fn conj_mul(&mut self, g: SpecVar, x: SpecVar) -> Result<SpecVar> {
        let (gs, xs) = (self.spectrum_shape(g), self.spectrum_shape(x));
        if gs != xs || self.source_width(g) != self.source_width(x) {
            return Err(TensorError::Shape { op: "conj_mul", lhs: gs.to_vec(), rhs: xs.to_vec() });
        }
        let (gd, xd) = (&self.node(g.0).data, &self.node(x.0).data);
        let mut out = vec![T::zero(); gd.len()];
        for j in (0..gd.len()).step_by(2) {
            let (gr, gi, xr, xi) = (gd[j], gd[j + 1], xd[j], xd[j + 1]);
            out[j] = gr * xr + gi * xi;
            out[j + 1] = gr * xi - gi * xr;
        }
        let sw = self.source_width(x);
        self.push_complex(gs.to_vec(), out, sw, Op::ConjMul { g: g.0, x: x.0 }, &[g.0, x.0])
    }

    /// Population variance of the complex bins over both spatial axes,
    /// `var(re) + var(im)`, kept as a `B × C × 1 × 1` tensor.
    pub fn variance_spatial(&mut self, s: SpecVar) -> Result<Var> {
        let [b, c, h, wh] = self.spectrum_shape(s);
        let n = T::of((h * wh) as f64);
        let mut out = Vec::with_capacity(b * c);
        for plane in self.node(s.0).data.chunks(2 * h * wh) {
            let (mut mr, mut mi) = (T::zero(), T::zero());
            for z in plane.chunks(2) {
                mr = mr + z[0];
                mi = mi + z[1];
            }
            let (mr, mi) = (mr / n, mi / n);
            let v = plane.chunks(2).fold(T::zero(), |a, z| a + (z[0] - mr) * (z[0] - mr) + (z[1] - mi) * (z[1] - mi));
            out.push(v / n);
        }
        self.push_real(vec![b, c, 1, 1], out, Op::VarianceSpatial(s.0), &[s.0])
    }

    /// Divide every bin of each `(sample, channel)` plane by the real scalar
    /// `d[sample, channel]`.
    pub fn div_real(&mut self, s: SpecVar, d: Var) -> Result<SpecVar> {
        let [b, c, h, wh] = self.spectrum_shape(s);
        if self.shape(d) != [b, c, 1, 1] {
            return Err(TensorError::Shape { op: "div_real", lhs: vec![b, c, 1, 1], rhs: self.shape(d).to_vec() });
        }
        let dd = self.data(d);
        let out: Vec<T> = self
            .node(s.0)
            .data
            .chunks(2 * h * wh)
            .zip(dd)
            .flat_map(|(plane, &den)| plane.iter().map(move |&v| v / den))
            .collect();
        let sw = self.source_width(s);
        self.push_complex(vec![b, c, h, wh], out, sw, Op::DivReal { s: s.0, d: d.0 }, &[s.0, d.0])
    }

    /// Binwise `σ(|z|)·cos(angle z)`, a real field over the half-spectrum grid.
    pub fn sigmoid_complex(&mut self, s: SpecVar) -> Result<Var> {
        let shape = self.spectrum_shape(s).to_vec();
        let out = self.node(s.0).data.chunks(2).map(|z| sigmoid_complex_parts(z[0], z[1])).collect();
        self.push_real(shape, out, Op::SigmoidComplex(s.0), &[s.0])
    }

    /// Embed a real half-spectrum-shaped field as `value + 0i`.
    pub fn lift(&mut self, a: Var, source_width: usize) -> Result<SpecVar> {
        let (b, c, h, wh) = self.dims4(a.0, "lift")?;
        if wh != half_width(source_width) {
            return Err(TensorError::HalfSpectrum { width: wh, source_width });
        }
        let out = self.data(a).iter().flat_map(|&v| [v, T::zero()]).collect();
        self.push_complex(vec![b, c, h, wh], out, source_width, Op::Lift(a.0), &[a.0])
    }
}

pub(crate) fn backward<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = tape.node(i);
    match node.op {
        Op::Rfft2(x) => {
            let xn = tape.node(x);
            let (h, w) = (xn.shape[2], xn.shape[3]);
            let wh = half_width(w);
            if let Some(d) = tape.grad_slot(grads, x) {
                let mut tmp = vec![T::zero(); h * w];
                for (gp, dp) in g.chunks(2 * h * wh).zip(d.chunks_mut(h * w)) {
                    rfft2_adjoint_plane(gp, h, w, &mut tmp);
                    dp.iter_mut().zip(&tmp).for_each(|(d, &v)| *d = *d + v);
                }
            }
        }
        Op::Irfft2(s) => {
            let (h, w) = (node.shape[2], node.shape[3]);
            let wh = half_width(w);
            if let Some(d) = tape.grad_slot(grads, s) {
                let mut tmp = vec![T::zero(); 2 * h * wh];
                for (gp, dp) in g.chunks(h * w).zip(d.chunks_mut(2 * h * wh)) {
                    rfft2_plane(gp, h, w, &mut tmp);
                    for (j, (d, &v)) in dp.iter_mut().zip(&tmp).enumerate() {
                        let k = (j / 2) % wh;
                        *d = *d + T::of(column_weight(k, w) as f64) * v;
                    }
                }
            }
        }
        Op::ComplexMul { s, w } => {
            let sd = &tape.node(s).data;
            let wd = &tape.node(w).data;
            let per = wd.len();
            if let Some(d) = tape.grad_slot(grads, s) {
                for (j, z) in g.chunks(2).enumerate() {
                    let k = (2 * j) % per;
                    let (cr, ci) = (wd[k], wd[k + 1]);
                    d[2 * j] = d[2 * j] + z[0] * cr + z[1] * ci;
                    d[2 * j + 1] = d[2 * j + 1] + z[1] * cr - z[0] * ci;
                }
            }
            if let Some(d) = tape.grad_slot(grads, w) {
                for (j, z) in g.chunks(2).enumerate() {
                    let k = (2 * j) % per;
                    let (ar, ai) = (sd[2 * j], sd[2 * j + 1]);
                    d[k] = d[k] + z[0] * ar + z[1] * ai;
                    d[k + 1] = d[k + 1] + z[1] * ar - z[0] * ai;
                }
            }
        }
        Op::ConjMul { g: gi, x } => {
            let gd = &tape.node(gi).data;
            let xd = &tape.node(x).data;
            // out = conj(g)·x: ∂x = G·g, ∂g = x·conj(G)
            if let Some(d) = tape.grad_slot(grads, x) {
                for j in (0..g.len()).step_by(2) {
                    let (ur, ui, vr, vi) = (g[j], g[j + 1], gd[j], gd[j + 1]);
                    d[j] = d[j] + ur * vr - ui * vi;
                    d[j + 1] = d[j + 1] + ur * vi + ui * vr;
                }
            }
            if let Some(d) = tape.grad_slot(grads, gi) {
                for j in (0..g.len()).step_by(2) {
                    let (ur, ui, xr, xi) = (g[j], g[j + 1], xd[j], xd[j + 1]);
                    d[j] = d[j] + xr * ur + xi * ui;
                    d[j + 1] = d[j + 1] + xi * ur - xr * ui;
                }
            }
        }
        Op::VarianceSpatial(s) => {
            let sn = tape.node(s);
            let bins = sn.shape[2] * sn.shape[3];
            let n = T::of(bins as f64);
            let two = T::of(2.0);
            if let Some(d) = tape.grad_slot(grads, s) {
                for (k, (plane, dp)) in sn.data.chunks(2 * bins).zip(d.chunks_mut(2 * bins)).enumerate() {
                    let (mut mr, mut mi) = (T::zero(), T::zero());
                    for z in plane.chunks(2) {
                        mr = mr + z[0];
                        mi = mi + z[1];
                    }
                    let (mr, mi) = (mr / n, mi / n);
                    let scale = two * g[k] / n;
                    for (z, dz) in plane.chunks(2).zip(dp.chunks_mut(2)) {
                        dz[0] = dz[0] + scale * (z[0] - mr);
                        dz[1] = dz[1] + scale * (z[1] - mi);
                    }
                }
            }
        }
        Op::DivReal { s, d: den } => {
            let per = 2 * node.shape[2] * node.shape[3];
            let sd = &tape.node(s).data;
            let dd = &tape.node(den).data;
            if let Some(d) = tape.grad_slot(grads, s) {
                for (j, (dv, &gv)) in d.iter_mut().zip(g).enumerate() {
                    *dv = *dv + gv / dd[j / per];
                }
            }
            if let Some(d) = tape.grad_slot(grads, den) {
                for (k, (gp, sp)) in g.chunks(per).zip(sd.chunks(per)).enumerate() {
                    let dot = gp.iter().zip(sp).fold(T::zero(), |a, (&u, &v)| a + u * v);
                    d[k] = d[k] - dot / (dd[k] * dd[k]);
                }
            }
        }
        Op::SigmoidComplex(s) => {
            let sd = &tape.node(s).data;
            if let Some(d) = tape.grad_slot(grads, s) {
                for (j, &gv) in g.iter().enumerate() {
                    let (dr, di) = sigmoid_complex_grad(sd[2 * j], sd[2 * j + 1]);
                    d[2 * j] = d[2 * j] + gv * dr;
                    d[2 * j + 1] = d[2 * j + 1] + gv * di;
                }
            }
        }
        Op::Lift(a) => {
            if let Some(d) = tape.grad_slot(grads, a) {
                for (j, dv) in d.iter_mut().enumerate() {
                    *dv = *dv + g[2 * j];
                }
            }
        }
        _ => unreachable!("not a spectral op"),
    }
}
