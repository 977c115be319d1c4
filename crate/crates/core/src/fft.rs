//! Orthonormal 2D real FFT over the last two axes.
//!
//! Forward and inverse transforms both carry a `1/√(HW)` factor, so the pair
//! is energy preserving. Spectra keep only the non-redundant half
//! `⌊W/2⌋+1` columns.

use rustfft::num_complex::Complex;

use crate::error::{Result, TensorError};
use crate::tensor::{half_width, Scalar, Spectrum, Tensor};

fn ortho_scale<T: Scalar>(h: usize, w: usize) -> T {
    T::of(1.0 / ((h * w) as f64).sqrt())
}

/// Forward transform of one `h × w` plane into interleaved `h × (w/2+1)` bins.
pub(crate) fn rfft2_plane<T: Scalar>(x: &[T], h: usize, w: usize, out: &mut [T]) {
    let wh = half_width(w);
    let mut rows: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    T::fft(&mut rows, w, false);
    let mut cols = vec![Complex::new(T::zero(), T::zero()); wh * h];
    for y in 0..h {
        for k in 0..wh {
            cols[k * h + y] = rows[y * w + k];
        }
    }
    T::fft(&mut cols, h, false);
    let scale = ortho_scale::<T>(h, w);
    for y in 0..h {
        for k in 0..wh {
            let v = cols[k * h + y];
            let i = 2 * (y * wh + k);
            out[i] = v.re * scale;
            out[i + 1] = v.im * scale;
        }
    }
}

/// Inverse of [`rfft2_plane`]; the missing columns are the conjugate mirror.
pub(crate) fn irfft2_plane<T: Scalar>(s: &[T], h: usize, w: usize, out: &mut [T]) {
    let wh = half_width(w);
    let mut cols = vec![Complex::new(T::zero(), T::zero()); wh * h];
    for y in 0..h {
        for k in 0..wh {
            let i = 2 * (y * wh + k);
            cols[k * h + y] = Complex::new(s[i], s[i + 1]);
        }
    }
    T::fft(&mut cols, h, true);
    let mut rows = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for k in 0..w {
            rows[y * w + k] = if k < wh { cols[k * h + y] } else { cols[(w - k) * h + y].conj() };
        }
    }
    T::fft(&mut rows, w, true);
    let scale = ortho_scale::<T>(h, w);
    for (o, v) in out.iter_mut().zip(&rows) {
        *o = v.re * scale;
    }
}

/// Adjoint of [`rfft2_plane`] viewed as a real-linear map: `Re(ifft2(g, zero padded))`.
pub(crate) fn rfft2_adjoint_plane<T: Scalar>(g: &[T], h: usize, w: usize, out: &mut [T]) {
    let wh = half_width(w);
    let mut cols = vec![Complex::new(T::zero(), T::zero()); wh * h];
    for y in 0..h {
        for k in 0..wh {
            let i = 2 * (y * wh + k);
            cols[k * h + y] = Complex::new(g[i], g[i + 1]);
        }
    }
    T::fft(&mut cols, h, true);
    let mut rows = vec![Complex::new(T::zero(), T::zero()); h * w];
    for y in 0..h {
        for k in 0..wh {
            rows[y * w + k] = cols[k * h + y];
        }
    }
    T::fft(&mut rows, w, true);
    let scale = ortho_scale::<T>(h, w);
    for (o, v) in out.iter_mut().zip(&rows) {
        *o = v.re * scale;
    }
}

/// Multiplicity of a half-spectrum column in the full spectrum (1 or 2).
pub(crate) fn column_weight(k: usize, w: usize) -> usize {
    if k == 0 || (w % 2 == 0 && k == w / 2) {
        1
    } else {
        2
    }
}

/// Orthonormal 2D real FFT of a rank-4 tensor over its spatial axes.
pub fn rfft2<T: Scalar>(x: &Tensor<T>) -> Result<Spectrum<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h == 0 || w == 0 {
        return Err(TensorError::Invalid(format!("rfft2 needs non-empty spatial axes, got {h}x{w}")));
    }
    if !x.is_finite() {
        return Err(TensorError::NonFinite { op: "rfft2 input".into() });
    }
    let wh = half_width(w);
    let mut out = vec![T::zero(); 2 * b * c * h * wh];
    for (plane, dst) in x.data().chunks(h * w).zip(out.chunks_mut(2 * h * wh)) {
        rfft2_plane(plane, h, w, dst);
    }
    Spectrum::new([b, c, h, wh], w, out)
}

/// Inverse of [`rfft2`], producing a real `out_h × out_w` signal per plane.
pub fn irfft2<T: Scalar>(s: &Spectrum<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [b, c, h, wh] = s.shape();
    if h != out_h || wh != half_width(out_w) {
        return Err(TensorError::Shape { op: "irfft2", lhs: vec![h, wh], rhs: vec![out_h, half_width(out_w)] });
    }
    let mut out = vec![T::zero(); b * c * out_h * out_w];
    for (plane, dst) in s.data().chunks(2 * h * wh).zip(out.chunks_mut(out_h * out_w)) {
        irfft2_plane(plane, out_h, out_w, dst);
    }
    let t = Tensor::new(&[b, c, out_h, out_w], out)?;
    if !t.is_finite() {
        return Err(TensorError::NonFinite { op: "irfft2".into() });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_spectrum() {
        let s = rfft2(&Tensor::<f64>::zeros(&[1, 1, 4, 4])).unwrap();
        assert_eq!(s.shape(), [1, 1, 4, 3]);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_maps_to_scaled_dc() {
        let c = 1.75;
        let s = rfft2(&Tensor::<f64>::full(&[1, 1, 4, 4], c)).unwrap();
        let dc = s.get(0, 0, 0, 0);
        assert!((dc.re - 4.0 * c).abs() < 1e-12 && dc.im.abs() < 1e-12);
        for (i, v) in s.data().iter().enumerate().skip(2) {
            assert!(v.abs() < 1e-12, "bin {i} = {v}");
        }
    }

    #[test]
    fn dc_only_spectrum_inverts_to_constant() {
        let c = -0.5;
        let mut s = Spectrum::<f64>::zeros([1, 1, 6, 4], 7).unwrap();
        s.set(0, 0, 0, 0, Complex::new((42.0f64).sqrt() * c, 0.0));
        let x = irfft2(&s, 6, 7).unwrap();
        assert!(x.data().iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let s = Spectrum::<f64>::zeros([1, 1, 4, 3], 4).unwrap();
        assert!(irfft2(&s, 4, 8).is_err());
        assert!(irfft2(&s, 5, 4).is_err());
        assert!(irfft2(&s, 4, 5).is_ok());
    }

    #[test]
    fn non_rank4_and_non_finite_rejected() {
        assert!(rfft2(&Tensor::<f64>::zeros(&[4, 4])).is_err());
        let mut x = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        x.data_mut()[1] = f64::NAN;
        assert!(matches!(rfft2(&x), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn column_weights() {
        assert_eq!((0..5).map(|k| column_weight(k, 8)).collect::<Vec<_>>(), vec![1, 2, 2, 2, 1]);
        assert_eq!((0..4).map(|k| column_weight(k, 7)).collect::<Vec<_>>(), vec![1, 2, 2, 2]);
    }
}
