//! Complex-valued activation functions.
//!
//! Split activations apply a real function to the real and imaginary parts
//! independently. Phase-amplitude activations squash the magnitude and keep
//! the phase. `sigmoid_complex` maps a complex value to the real number
//! `σ(|z|)·cos(angle z)`.

use crate::ops::sigmoid;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexValue<T = f64> {
    pub re: T,
    pub im: T,
}

impl<T: Scalar> ComplexValue<T> {
    pub fn new(re: T, im: T) -> Self {
        ComplexValue { re, im }
    }

    pub fn real(re: T) -> Self {
        ComplexValue { re, im: T::zero() }
    }

    pub fn magnitude(self) -> T {
        self.re.hypot(self.im)
    }

    /// Phase in `(−π, π]`, with `phase(0) = 0`.
    pub fn phase(self) -> T {
        if self.re == T::zero() && self.im == T::zero() {
            return T::zero();
        }
        let p = self.im.atan2(self.re);
        if p <= -T::of(std::f64::consts::PI) {
            T::of(std::f64::consts::PI)
        } else {
            p
        }
    }

    fn unit(self) -> (T, T) {
        let r = self.magnitude();
        if r == T::zero() {
            (T::one(), T::zero())
        } else {
            (self.re / r, self.im / r)
        }
    }
}

/// `g(Re z) + i·g(Im z)`.
pub fn split_apply<T: Scalar>(g: impl Fn(T) -> T, z: ComplexValue<T>) -> ComplexValue<T> {
    ComplexValue::new(g(z.re), g(z.im))
}

/// `z / (c + |z|/r)`: magnitude bounded by `r`, phase unchanged.
pub fn pa_saturate<T: Scalar>(z: ComplexValue<T>, c: T, r: T) -> ComplexValue<T> {
    let k = T::one() / (c + z.magnitude() / r);
    ComplexValue::new(z.re * k, z.im * k)
}

/// `tanh(|z|/m)·exp(i·φ(z))`: magnitude in `[0, 1)`, phase unchanged.
pub fn pa_tanh_phase<T: Scalar>(z: ComplexValue<T>, m: T) -> ComplexValue<T> {
    let mag = (z.magnitude() / m).tanh();
    let (ur, ui) = z.unit();
    ComplexValue::new(mag * ur, mag * ui)
}

/// Argument of [`sigmoid_complex`]: real inputs take the ordinary sigmoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmoidInput<T> {
    Real(T),
    Complex(ComplexValue<T>),
}

impl<T> From<ComplexValue<T>> for SigmoidInput<T> {
    fn from(z: ComplexValue<T>) -> Self {
        SigmoidInput::Complex(z)
    }
}

impl From<f64> for SigmoidInput<f64> {
    fn from(x: f64) -> Self {
        SigmoidInput::Real(x)
    }
}

impl From<f32> for SigmoidInput<f32> {
    fn from(x: f32) -> Self {
        SigmoidInput::Real(x)
    }
}

/// `σ(|x|)·cos(angle x)` for complex `x`, `σ(x)` for real `x`.
pub fn sigmoid_complex<T: Scalar>(x: impl Into<SigmoidInput<T>>) -> T {
    match x.into() {
        SigmoidInput::Real(v) => sigmoid(v),
        SigmoidInput::Complex(z) => sigmoid_complex_parts(z.re, z.im),
    }
}

#[inline]
pub(crate) fn sigmoid_complex_parts<T: Scalar>(re: T, im: T) -> T {
    let r = re.hypot(im);
    if r == T::zero() {
        return sigmoid(T::zero());
    }
    sigmoid(r) * (re / r)
}

/// Partial derivatives `(∂/∂re, ∂/∂im)` of `σ(|z|)·re/|z|`; zero at the origin.
#[inline]
pub(crate) fn sigmoid_complex_grad<T: Scalar>(re: T, im: T) -> (T, T) {
    let r = re.hypot(im);
    if r == T::zero() {
        return (T::zero(), T::zero());
    }
    let s = sigmoid(r);
    let ds = s * (T::one() - s);
    let r2 = r * r;
    let r3 = r2 * r;
    (ds * re * re / r2 + s * im * im / r3, ds * re * im / r2 - s * re * im / r3)
}

/// Public view of the derivative used by the tape, for diagnostics and tests.
pub fn sigmoid_complex_derivative<T: Scalar>(z: ComplexValue<T>) -> (T, T) {
    sigmoid_complex_grad(z.re, z.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexValue {
        ComplexValue::new(re, im)
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_apply(|v| v, c(3.0, -2.0)), c(3.0, -2.0));
        assert_eq!(split_apply(f64::tanh, c(0.0, 0.0)), c(0.0, 0.0));
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let z = split_apply(sigmoid, c(1.0, 1.0));
        assert!((z.re - s1).abs() < 1e-15 && (z.im - s1).abs() < 1e-15);
        assert!((z.re - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(pa_saturate(c(0.0, 0.0), 1.0, 1.0), c(0.0, 0.0));
        assert!((pa_saturate(c(1.0, 0.0), 1.0, 1.0).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tanh_phase_examples() {
        assert_eq!(pa_tanh_phase(c(0.0, 0.0), 1.0), c(0.0, 0.0));
        let big = pa_tanh_phase(c(100.0, 0.0), 1.0);
        assert!((big.re - 1.0).abs() < 1e-12 && big.im == 0.0);
        let z = pa_tanh_phase(c(0.0, 2.0), 1.0);
        assert!(z.re.abs() < 1e-15);
        assert!((z.im - 2.0f64.tanh()).abs() < 1e-15);
        assert!((z.im - 0.9640).abs() < 1e-4);
    }

    #[test]
    fn sigmoid_complex_examples() {
        assert_eq!(sigmoid_complex(0.0f64), 0.5);
        assert!(sigmoid_complex(c(0.0, 1.0)).abs() < 1e-16);
        let v = sigmoid_complex(c(-1.0, 0.0));
        assert!((v + sigmoid(1.0)).abs() < 1e-15);
        assert!((v + 0.7311).abs() < 1e-4);
        assert_eq!(sigmoid_complex(c(0.0, 0.0)), 0.5);
    }

    #[test]
    fn phase_conventions() {
        assert_eq!(c(0.0, 0.0).phase(), 0.0);
        assert_eq!(c(-0.0, -0.0).phase(), 0.0);
        assert_eq!(c(-1.0, -0.0).phase(), std::f64::consts::PI);
        assert_eq!(c(-1.0, 0.0).phase(), std::f64::consts::PI);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for &(re, im) in &[(0.3f64, -0.7f64), (-1.2, 0.4), (2.0, 2.5), (-0.05, -0.01)] {
            let (dr, di) = sigmoid_complex_grad(re, im);
            let fr = (sigmoid_complex_parts(re + h, im) - sigmoid_complex_parts(re - h, im)) / (2.0 * h);
            let fi = (sigmoid_complex_parts(re, im + h) - sigmoid_complex_parts(re, im - h)) / (2.0 * h);
            assert!((dr - fr).abs() < 1e-8, "{dr} vs {fr}");
            assert!((di - fi).abs() < 1e-8, "{di} vs {fi}");
        }
        assert_eq!(sigmoid_complex_grad(0.0f64, 0.0), (0.0, 0.0));
    }
}
