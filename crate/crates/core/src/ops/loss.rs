//! Fused scalar losses over probability maps.

use crate::error::{Result, TensorError};
use crate::tape::{Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    fn check_target(&self, p: Var, target: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape(p) != target.shape() {
            return Err(TensorError::Shape { op, lhs: self.shape(p).to_vec(), rhs: target.shape().to_vec() });
        }
        Ok(())
    }

    /// `−(1/N) Σ [G ln P + (1−G) ln(1−P)]` with `P` clamped to `[eps, 1−eps]`.
    pub fn bce(&mut self, p: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        self.check_target(p, target, "bce")?;
        let lo = eps;
        let hi = T::one() - eps;
        let ps = self.data(p);
        let n = T::of(ps.len() as f64);
        let mut acc = T::zero();
        for (&pv, &gv) in ps.iter().zip(target.data()) {
            let pc = pv.max(lo).min(hi);
            acc = acc + gv * pc.ln() + (T::one() - gv) * (T::one() - pc).ln();
        }
        if self.tracking_kinks() {
            let d: Vec<u64> = ps.iter().map(|&v| (v < lo) as u64 + 2 * (v > hi) as u64).collect();
            self.note_kinks(d.into_iter());
        }
        self.push_real(vec![1], vec![-acc / n], Op::Bce { p: p.0, target: target.data().to_vec(), eps }, &[p.0])
    }

    /// `1 − (2ΣPG + ε)/(ΣP² + ΣG² + ε)`.
    pub fn dice_loss(&mut self, p: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        self.check_target(p, target, "dice_loss")?;
        let (inter, denom) = dice_terms(self.data(p), target.data(), eps);
        let loss = T::one() - (T::of(2.0) * inter + eps) / denom;
        self.push_real(vec![1], vec![loss], Op::Dice { p: p.0, target: target.data().to_vec(), eps }, &[p.0])
    }

    /// `−(1/N) Σᵢ Σ_c G_ic ln P_ic` over `N` pixels of a `B × C × H × W` map
    /// whose channels must sum to one at every pixel.
    pub fn cross_entropy(&mut self, p: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        self.check_target(p, target, "cross_entropy")?;
        let (b, c, h, w) = self.dims4(p.0, "cross_entropy")?;
        let ps = self.data(p);
        let hw = h * w;
        for bi in 0..b {
            for px in 0..hw {
                let s = (0..c).fold(0.0, |a, ci| a + ps[(bi * c + ci) * hw + px].as_f64());
                if (s - 1.0).abs() > 1e-5 {
                    return Err(TensorError::NotNormalized { pixel: bi * hw + px, sum: s });
                }
            }
        }
        let n = T::of((b * hw) as f64);
        let acc = ps.iter().zip(target.data()).fold(T::zero(), |a, (&pv, &gv)| a + gv * pv.max(eps).ln());
        self.push_real(
            vec![1],
            vec![-acc / n],
            Op::CrossEntropy { p: p.0, target: target.data().to_vec(), eps },
            &[p.0],
        )
    }
}

fn dice_terms<T: Scalar>(p: &[T], g: &[T], eps: T) -> (T, T) {
    let mut inter = T::zero();
    let mut denom = eps;
    for (&pv, &gv) in p.iter().zip(g) {
        inter = inter + pv * gv;
        denom = denom + pv * pv + gv * gv;
    }
    (inter, denom)
}

pub(crate) fn backward<T: Scalar>(tape: &Tape<T>, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = tape.node(i);
    let upstream = g[0];
    match &node.op {
        Op::Bce { p, target, eps } => {
            let ps = &tape.node(*p).data;
            let n = T::of(ps.len() as f64);
            let (lo, hi) = (*eps, T::one() - *eps);
            if let Some(d) = tape.grad_slot(grads, *p) {
                for ((dv, &pv), &gv) in d.iter_mut().zip(ps).zip(target) {
                    if pv < lo || pv > hi {
                        continue;
                    }
                    let gp = -(gv / pv - (T::one() - gv) / (T::one() - pv)) / n;
                    *dv = *dv + upstream * gp;
                }
            }
        }
        Op::Dice { p, target, eps } => {
            let ps = &tape.node(*p).data;
            let (inter, denom) = dice_terms(ps, target, *eps);
            let two = T::of(2.0);
            let num = two * inter + *eps;
            if let Some(d) = tape.grad_slot(grads, *p) {
                for ((dv, &pv), &gv) in d.iter_mut().zip(ps).zip(target) {
                    let gp = -(two * gv * denom - num * two * pv) / (denom * denom);
                    *dv = *dv + upstream * gp;
                }
            }
        }
        Op::CrossEntropy { p, target, eps } => {
            let pn = tape.node(*p);
            let n = T::of((pn.shape[0] * pn.shape[2] * pn.shape[3]) as f64);
            if let Some(d) = tape.grad_slot(grads, *p) {
                for ((dv, &pv), &gv) in d.iter_mut().zip(&pn.data).zip(target) {
                    if pv > *eps {
                        *dv = *dv - upstream * gv / (pv * n);
                    }
                }
            }
        }
        _ => unreachable!("not a loss op"),
    }
}
