//! Convolution, pooling, resampling and channel concatenation.

use rayon::prelude::*;

use crate::error::{Result, TensorError};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn new(cin: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::Invalid("conv2d stride must be positive".into()));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(TensorError::KernelTooLarge { kernel: (kh, kw), input: (h + 2 * pad, w + 2 * pad) });
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { cin, h, w, kh, kw, stride, pad, ho, wo })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// Row `(c, ky, kx)` of the patch matrix holds the input pixel under that
    /// kernel tap for every output position; padding reads as zero.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.p();
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &mut cols[((c * self.kh + ky) * self.kw + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.p();
        for c in 0..self.cin {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &cols[((c * self.kh + ky) * self.kw + kx) * p..][..p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                let di = iy as usize * self.w + ix as usize;
                                plane[di] = plane[di] + row[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// 2D cross-correlation with zero padding. `w` is `cout × cin × kh × kw`,
    /// `bias` (if any) has `cout` entries.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (b, cin, h, wd) = self.dims4(x.0, "conv2d")?;
        let (cout, wcin, kh, kw) = self.dims4(w.0, "conv2d")?;
        if wcin != cin {
            return Err(TensorError::Shape { op: "conv2d", lhs: self.shape(x).to_vec(), rhs: self.shape(w).to_vec() });
        }
        if let Some(bv) = bias {
            if self.data(bv).len() != cout {
                return Err(TensorError::Shape { op: "conv2d bias", lhs: vec![cout], rhs: self.shape(bv).to_vec() });
            }
        }
        let geom = ConvGeom::new(cin, h, wd, kh, kw, stride, pad)?;
        let (k, p) = (geom.k(), geom.p());
        let xs = self.data(x);
        let ws = self.data(w);
        let bs = bias.map(|bv| self.data(bv));
        let mut out = vec![T::zero(); b * cout * p];
        out.par_chunks_mut(cout * p).enumerate().for_each(|(bi, dst)| {
            let mut cols = vec![T::zero(); k * p];
            geom.im2col(&xs[bi * cin * h * wd..(bi + 1) * cin * h * wd], &mut cols);
            if let Some(bs) = bs {
                for (co, row) in dst.chunks_mut(p).enumerate() {
                    row.fill(bs[co]);
                }
            }
            let beta = if bs.is_some() { T::one() } else { T::zero() };
            T::gemm(cout, k, p, ws, (k as isize, 1), &cols, (p as isize, 1), beta, dst, (p as isize, 1));
        });
        let mut inputs = vec![x.0, w.0];
        inputs.extend(bias.map(|v| v.0));
        self.push_real(
            vec![b, cout, geom.ho, geom.wo],
            out,
            Op::Conv2d { x: x.0, w: w.0, b: bias.map(|v| v.0), stride, pad },
            &inputs,
        )
    }

    /// 2×2 max pooling with stride 2; ties resolve to the first element in
    /// row-major window order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(x.0, "max_pool2")?;
        if h < 2 || w < 2 {
            return Err(TensorError::KernelTooLarge { kernel: (2, 2), input: (h, w) });
        }
        let (ho, wo) = (h / 2, w / 2);
        let xs = self.data(x);
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::with_capacity(b * c * ho * wo);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                    out.push(xs[best]);
                    argmax.push(best);
                }
            }
        }
        if self.tracking_kinks() {
            let decisions: Vec<u64> = argmax.iter().map(|&a| a as u64).collect();
            self.note_kinks(decisions.into_iter());
        }
        self.push_real(vec![b, c, ho, wo], out, Op::MaxPool2 { x: x.0, argmax }, &[x.0])
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(x.0, "upsample2")?;
        let xs = self.data(x);
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); b * c * ho * wo];
        for plane in 0..b * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    out[(plane * ho + oy) * wo + ox] = xs[(plane * h + oy / 2) * w + ox / 2];
                }
            }
        }
        self.push_real(vec![b, c, ho, wo], out, Op::Upsample2(x.0), &[x.0])
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.dims4(a.0, "concat")?;
        let (nb, cb, hb, wb) = self.dims4(b.0, "concat")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(TensorError::Shape { op: "concat", lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() });
        }
        let (xa, xb) = (self.data(a), self.data(b));
        let (sa, sb) = (ca * h * w, cb * h * w);
        let mut out = Vec::with_capacity(n * (sa + sb));
        for i in 0..n {
            out.extend_from_slice(&xa[i * sa..(i + 1) * sa]);
            out.extend_from_slice(&xb[i * sb..(i + 1) * sb]);
        }
        self.push_real(vec![n, ca + cb, h, w], out, Op::Concat(a.0, b.0), &[a.0, b.0])
    }
}

pub(crate) fn backward<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = tape.node(i);
    match node.op {
        Op::Conv2d { x, w, b, stride, pad } => {
            let xn = tape.node(x);
            let wn = tape.node(w);
            let (bsz, cin, h, wd) = (xn.shape[0], xn.shape[1], xn.shape[2], xn.shape[3]);
            let (cout, kh, kw) = (wn.shape[0], wn.shape[2], wn.shape[3]);
            let geom = ConvGeom::new(cin, h, wd, kh, kw, stride, pad).expect("validated in forward");
            let (k, p) = (geom.k(), geom.p());
            let need_x = xn.requires_grad;
            let need_w = wn.requires_grad;
            let per_sample: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..bsz)
                .into_par_iter()
                .map(|bi| {
                    let gout = &g[bi * cout * p..(bi + 1) * cout * p];
                    let dw = need_w.then(|| {
                        let mut cols = vec![T::zero(); k * p];
                        geom.im2col(&xn.data[bi * cin * h * wd..(bi + 1) * cin * h * wd], &mut cols);
                        let mut dw = vec![T::zero(); cout * k];
                        T::gemm(
                            cout,
                            p,
                            k,
                            gout,
                            (p as isize, 1),
                            &cols,
                            (1, p as isize),
                            T::zero(),
                            &mut dw,
                            (k as isize, 1),
                        );
                        dw
                    });
                    let dx = need_x.then(|| {
                        let mut dcols = vec![T::zero(); k * p];
                        T::gemm(
                            k,
                            cout,
                            p,
                            &wn.data,
                            (1, k as isize),
                            gout,
                            (p as isize, 1),
                            T::zero(),
                            &mut dcols,
                            (p as isize, 1),
                        );
                        let mut dx = vec![T::zero(); cin * h * wd];
                        geom.col2im(&dcols, &mut dx);
                        dx
                    });
                    (dw, dx)
                })
                .collect();
            if let Some(d) = tape.grad_slot(grads, w) {
                for (dw, _) in &per_sample {
                    d.iter_mut().zip(dw.as_ref().expect("computed")).for_each(|(d, &v)| *d = *d + v);
                }
            }
            if let Some(d) = tape.grad_slot(grads, x) {
                for (bi, (_, dx)) in per_sample.iter().enumerate() {
                    let dst = &mut d[bi * cin * h * wd..(bi + 1) * cin * h * wd];
                    dst.iter_mut().zip(dx.as_ref().expect("computed")).for_each(|(d, &v)| *d = *d + v);
                }
            }
            if let Some(bias) = b {
                if let Some(d) = tape.grad_slot(grads, bias) {
                    for bi in 0..bsz {
                        for co in 0..cout {
                            let row = &g[(bi * cout + co) * p..][..p];
                            d[co] = d[co] + row.iter().fold(T::zero(), |a, &v| a + v);
                        }
                    }
                }
            }
        }
        Op::MaxPool2 { x, ref argmax } => {
            if let Some(d) = tape.grad_slot(grads, x) {
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] = d[src] + gv;
                }
            }
        }
        Op::Upsample2(x) => {
            let xn = tape.node(x);
            let (h, w) = (xn.shape[2], xn.shape[3]);
            let (ho, wo) = (2 * h, 2 * w);
            let planes = xn.shape[0] * xn.shape[1];
            if let Some(d) = tape.grad_slot(grads, x) {
                for plane in 0..planes {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let di = (plane * h + oy / 2) * w + ox / 2;
                            d[di] = d[di] + g[(plane * ho + oy) * wo + ox];
                        }
                    }
                }
            }
        }
        Op::Concat(a, b) => {
            let an = tape.node(a);
            let bn = tape.node(b);
            let n = an.shape[0];
            let sa = an.data.len() / n;
            let sb = bn.data.len() / n;
            if let Some(d) = tape.grad_slot(grads, a) {
                for s in 0..n {
                    let src = &g[s * (sa + sb)..][..sa];
                    d[s * sa..(s + 1) * sa].iter_mut().zip(src).for_each(|(d, &v)| *d = *d + v);
                }
            }
            if let Some(d) = tape.grad_slot(grads, b) {
                for s in 0..n {
                    let src = &g[s * (sa + sb) + sa..][..sb];
                    d[s * sb..(s + 1) * sb].iter_mut().zip(src).for_each(|(d, &v)| *d = *d + v);
                }
            }
        }
        _ => unreachable!("not a conv op"),
    }
}
