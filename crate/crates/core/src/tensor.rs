//! Dense row-major tensors and half-spectra.

use std::cell::RefCell;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};

/// Maximum supported tensor rank.
pub const MAX_RANK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

/// Floating-point element type of a tensor.
///
/// Implemented for `f32` (training) and `f64` (verification).
pub trait Scalar: num_traits::Float + Default + Sum + Debug + Display + LowerExp + Send + Sync + 'static {
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided row/column-major views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    /// In-place unnormalized FFT over every contiguous chunk of `len` in `buf`.
    fn fft(buf: &mut [Complex<Self>], len: usize, inverse: bool);
}

thread_local! {
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_gemm_bounds<T>(rows: usize, cols: usize, strides: (isize, isize), buf: &[T]) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * strides.0 + (cols - 1) as isize * strides.1;
    assert!(strides.0 >= 0 && strides.1 >= 0 && (last as usize) < buf.len(), "gemm view out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $dtype:expr, $gemm:ident, $planner:ident) => {
        impl Scalar for $t {
            const DTYPE: DType = $dtype;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_gemm_bounds(m, k, a_strides, a);
                check_gemm_bounds(k, n, b_strides, b);
                check_gemm_bounds(m, n, c_strides, c);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every view was bounds-checked above against its slice.
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }

            fn fft(buf: &mut [Complex<Self>], len: usize, inverse: bool) {
                if len <= 1 || buf.is_empty() {
                    return;
                }
                let plan = $planner.with(|p| {
                    let mut p = p.borrow_mut();
                    if inverse {
                        p.plan_fft_inverse(len)
                    } else {
                        p.plan_fft_forward(len)
                    }
                });
                plan.process(buf);
            }
        }
    };
}

impl_scalar!(f32, DType::F32, sgemm, PLANNER_F32);
impl_scalar!(f64, DType::F64, dgemm, PLANNER_F64);

/// Dense real tensor, row-major, rank at most four.
///
/// Gradient bookkeeping lives on the [`Tape`](crate::tape::Tape); a tensor
/// itself is an immutable value once an op has produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(TensorError::RankTooLarge(shape.len()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength { expected, actual: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n]).expect("rank checked by caller")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(&mut f).collect()).expect("rank checked by caller")
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    /// Extents of a rank-4 tensor as `(batch, channel, height, width)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(TensorError::Rank { expected: 4, shape: self.shape.clone() }),
        }
    }

    pub fn at4(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        let (_, cc, hh, ww) = self.dims4().expect("rank-4 tensor");
        self.data[((b * cc + c) * hh + y) * ww + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }
}

/// Half-spectrum of a real rank-4 signal over its last two axes.
///
/// `shape` is `batch × channel × H × (⌊W/2⌋+1)`; `data` interleaves
/// `(re, im)` pairs, so its length is twice the product of `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    shape: [usize; 4],
    source_width: usize,
    data: Vec<T>,
}

/// Width of the half-spectrum of a real signal of width `w`.
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(shape: [usize; 4], source_width: usize, data: Vec<T>) -> Result<Self> {
        if shape[3] != half_width(source_width) {
            return Err(TensorError::HalfSpectrum { width: shape[3], source_width });
        }
        let expected = 2 * shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, actual: data.len() });
        }
        Ok(Spectrum { shape, source_width, data })
    }

    pub fn zeros(shape: [usize; 4], source_width: usize) -> Result<Self> {
        Self::new(shape, source_width, vec![T::zero(); 2 * shape.iter().product::<usize>()])
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    /// Interleaved `(re, im)` values.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Number of complex bins.
    pub fn bins(&self) -> usize {
        self.data.len() / 2
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> Complex<T> {
        let [_, cc, hh, ww] = self.shape;
        let i = 2 * (((b * cc + c) * hh + y) * ww + x);
        Complex::new(self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: Complex<T>) {
        let [_, cc, hh, ww] = self.shape;
        let i = 2 * (((b * cc + c) * hh + y) * ww + x);
        self.data[i] = v.re;
        self.data[i + 1] = v.im;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
