//! Independent reference implementations for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use freqgate_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

pub fn random_in(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.gen_range(lo..hi))
}

/// Full orthonormal DFT of an `h × w` real plane, `(re, im)` per bin.
pub fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let s = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![(0.0, 0.0); h * w];
    for k in 0..h {
        for l in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let a = -2.0 * PI * ((k * m) as f64 / h as f64 + (l * n) as f64 / w as f64);
                    re += x[m * w + n] * a.cos();
                    im += x[m * w + n] * a.sin();
                }
            }
            out[k * w + l] = (re * s, im * s);
        }
    }
    out
}

/// Half-spectrum (interleaved) cut from [`naive_dft`].
pub fn naive_rfft2(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let full = naive_dft(x, h, w);
    let wh = w / 2 + 1;
    let mut out = Vec::with_capacity(2 * h * wh);
    for k in 0..h {
        for l in 0..wh {
            out.push(full[k * w + l].0);
            out.push(full[k * w + l].1);
        }
    }
    out
}

/// Inverse of an interleaved half-spectrum by direct summation: an inverse
/// DFT down each stored column, then each row is summed with its missing
/// columns taken as complex conjugates, keeping the real part.
pub fn naive_irfft2(s: &[f64], h: usize, w: usize) -> Vec<f64> {
    let wh = w / 2 + 1;
    let mut cols = vec![(0.0, 0.0); h * wh];
    for m in 0..h {
        for l in 0..wh {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..h {
                let (a, b) = (s[2 * (k * wh + l)], s[2 * (k * wh + l) + 1]);
                let t = 2.0 * PI * (k * m) as f64 / h as f64;
                re += a * t.cos() - b * t.sin();
                im += a * t.sin() + b * t.cos();
            }
            cols[m * wh + l] = (re, im);
        }
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![0.0; h * w];
    for m in 0..h {
        for n in 0..w {
            let mut acc = 0.0;
            for l in 0..wh {
                let (re, im) = cols[m * wh + l];
                let t = 2.0 * PI * (l * n) as f64 / w as f64;
                let real_part = re * t.cos() - im * t.sin();
                let mult = if l == 0 || (w % 2 == 0 && l == w / 2) { 1.0 } else { 2.0 };
                acc += mult * real_part;
            }
            out[m * w + n] = acc * scale;
        }
    }
    out
}

/// Direct circular convolution of two `h × w` planes.
pub fn circular_conv(f: &[f64], g: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for m in 0..h {
                for n in 0..w {
                    acc += f[m * w + n] * g[((y + h - m) % h) * w + (x + w - n) % w];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Zero-padded cross-correlation, `B × Ci × H × W` input with `Co × Ci × k × k`
/// kernels, stride 1.
pub fn sliding_conv(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&[f64]>, pad: usize) -> Tensor<f64> {
    let (b, ci, h, w) = x.dims4().unwrap();
    let (co, _, kh, kw) = k.dims4().unwrap();
    let oh = h + 2 * pad - kh + 1;
    let ow = w + 2 * pad - kw + 1;
    let mut out = Tensor::zeros(&[b, co, oh, ow]);
    for bi in 0..b {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..ci {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (iy, ix) = ((y + dy) as isize - pad as isize, (xx + dx) as isize - pad as isize);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.at4(bi, c, iy as usize, ix as usize) * k.at4(o, c, dy, dx);
                            }
                        }
                    }
                    out.data_mut()[((bi * co + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// Per-sample standardisation over all of `C × H × W`, then a per-channel affine.
pub fn layer_norm_ref(x: &Tensor<f64>, gain: &[f64], bias: &[f64], eps: f64) -> Tensor<f64> {
    let (b, c, h, w) = x.dims4().unwrap();
    let n = c * h * w;
    let mut out = x.clone();
    for bi in 0..b {
        let s = &x.data()[bi * n..(bi + 1) * n];
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        for i in 0..n {
            let ch = i / (h * w);
            out.data_mut()[bi * n + i] = (s[i] - mean) / (var + eps).sqrt() * gain[ch] + bias[ch];
        }
    }
    out
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
