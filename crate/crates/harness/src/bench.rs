//! Direct circular convolution against FFT-multiply filtering.
//!
//! For each size `N` the same `k × k` kernel (the full `N × N` frame when
//! `kernel` is 0, which is what a global filter is equivalent to) is applied
//! to `C` channels both ways. The FFT path transforms the input, multiplies
//! by the precomputed kernel spectrum (a global filter learns that spectrum
//! directly) and transforms back. Analytic FLOP estimates sit next to the
//! measured medians, together with parameter counts for one convolution,
//! one attention gate and one filter gate at that size.

use std::fmt::Write as _;
use std::time::Instant;

use freqgate_core::fft::{irfft2, rfft2};
use freqgate_core::layers::{AttentionFilterGateLayer, AttentionGateLayer, Conv2dLayer, GateScoring};
use freqgate_core::params::ParamStore;
use freqgate_core::{half_width, Spectrum, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MIN_REPS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub channels: usize,
    pub kernel: usize,
    pub conv_flops: f64,
    pub fft_flops: f64,
    pub direct_median_s: f64,
    pub fft_median_s: f64,
    /// Largest absolute difference between the two paths.
    pub max_abs_diff: f64,
    pub conv_params_table: usize,
    pub conv_params_counted: usize,
    pub ag_params_table: usize,
    pub ag_params_counted: usize,
    pub afgn_params_table: usize,
    pub afgn_params_counted: usize,
    /// Counted parameters of one of the two global filters in the gate.
    pub filter_params_counted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Smallest size from which the FFT path is faster at every larger
    /// benchmarked size; `None` if it never is.
    pub crossover: Option<usize>,
}

/// `2·k²·N²·C`: one multiply and one add per tap.
pub fn conv_flops(n: usize, channels: usize, kernel: usize) -> f64 {
    let k = if kernel == 0 { n } else { kernel } as f64;
    2.0 * k * k * (n * n) as f64 * channels as f64
}

/// Two real 2D transforms at `2.5·N²·log2(N²)` each plus one complex multiply
/// (6 flops) per half-spectrum bin, per channel.
pub fn fft_flops(n: usize, channels: usize) -> f64 {
    let nn = (n * n) as f64;
    let transform = 2.5 * nn * nn.log2();
    channels as f64 * (2.0 * transform + 6.0 * (n * half_width(n)) as f64)
}

/// `y[i, j] = Σ K[a, b]·x[(i − a) mod N, (j − b) mod N]` per channel.
pub fn circular_conv_direct(x: &[f64], n: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * n];
    for a in 0..k {
        for b in 0..k {
            let w = kernel[a * k + b];
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let src = &x[((i + n - a % n) % n) * n..][..n];
                let dst = &mut y[i * n..(i + 1) * n];
                // Columns j ≥ b read src[j − b]; the first b wrap around.
                let b = b % n;
                for (d, s) in dst[b..].iter_mut().zip(&src[..n - b]) {
                    *d += w * s;
                }
                for (d, s) in dst[..b].iter_mut().zip(&src[n - b..]) {
                    *d += w * s;
                }
            }
        }
    }
    y
}

/// Spectrum of the kernel zero-padded to `N × N`, scaled so that multiplying
/// an orthonormal input spectrum by it and inverting yields the circular
/// convolution.
pub fn kernel_spectrum(kernel: &[f64], k: usize, n: usize) -> Result<Spectrum<f64>> {
    let mut padded = vec![0.0; n * n];
    for a in 0..k {
        for b in 0..k {
            padded[a * n + b] = kernel[a * k + b];
        }
    }
    let mut s = rfft2(&Tensor::new(&[1, 1, n, n], padded)?)?;
    // Orthonormal transforms carry 1/N each; the convolution theorem
    // needs the unnormalized kernel spectrum.
    s.data_mut().iter_mut().for_each(|v| *v *= n as f64);
    Ok(s)
}

/// FFT-multiply filtering of `C` channels by one kernel spectrum.
pub fn fft_filter(x: &Tensor<f64>, kspec: &Spectrum<f64>) -> Result<Tensor<f64>> {
    let (_, c, h, w) = x.dims4()?;
    let mut s = rfft2(x)?;
    let bins = h * half_width(w);
    let kd = kspec.data();
    for ch in s.data_mut().chunks_exact_mut(2 * bins).take(c) {
        for (z, k) in ch.chunks_exact_mut(2).zip(kd.chunks_exact(2)) {
            let (a, b) = (z[0], z[1]);
            z[0] = a * k[0] - b * k[1];
            z[1] = a * k[1] + b * k[0];
        }
    }
    Ok(irfft2(&s, h, w)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    f()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

/// Parameter counts from the table: convolution `k²·D`, attention gate
/// `H·W`, filter gate `2·H·W·(F_l + F_g + F_int) + 4·D²`, with
/// `F_l = F_g = D = C` and `F_int = C/2`.
fn table_counts(n: usize, c: usize) -> (usize, usize, usize) {
    let f_int = (c / 2).max(1);
    (9 * c, n * n, 2 * n * n * (c + c + f_int) + 4 * c * c)
}

fn counted(n: usize, c: usize) -> Result<(usize, usize, usize, usize)> {
    let mut store = ParamStore::<f64>::new(0);
    let conv = Conv2dLayer::new(&mut store, "conv", c, c, 3, true)?;
    let f_int = (c / 2).max(1);
    let ag = AttentionGateLayer::new(&mut store, "ag", c, c, f_int)?;
    let afg = AttentionFilterGateLayer::new(&mut store, "afg", c, c, f_int, n, n, GateScoring::SigmoidComplex)?;
    Ok((conv.param_count(), ag.param_count(), afg.param_count(), afg.filter_g.param_count()))
}

pub fn bench_complexity(sizes: &[usize], channels: usize, kernel: usize, reps: usize, seed: u64) -> Result<BenchTable> {
    if sizes.is_empty() || channels == 0 {
        return Err(HarnessError::Config("bench needs at least one size and one channel".into()));
    }
    let reps = reps.max(MIN_REPS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let k = if kernel == 0 { n } else { kernel };
        if n < 2 || k > n {
            return Err(HarnessError::Config(format!("size {n} must be at least 2 and not below kernel {k}")));
        }
        let x = Tensor::from_fn(&[1, channels, n, n], |_| rng.gen_range(-1.0..1.0));
        let kern: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-1.0..1.0) / k as f64).collect();
        let kspec = kernel_spectrum(&kern, k, n)?;

        let plane = n * n;
        let mut direct = Vec::new();
        let direct_s = time(reps, || {
            direct = (0..channels)
                .flat_map(|c| circular_conv_direct(&x.data()[c * plane..(c + 1) * plane], n, &kern, k))
                .collect();
            Ok(())
        })?;
        let mut spectral = Tensor::zeros(&[1]);
        let fft_s = time(reps, || {
            spectral = fft_filter(&x, &kspec)?;
            Ok(())
        })?;
        let max_abs_diff = direct.iter().zip(spectral.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        let (conv_t, ag_t, afgn_t) = table_counts(n, channels);
        let (conv_c, ag_c, afgn_c, filt_c) = counted(n, channels)?;
        rows.push(BenchRow {
            size: n,
            channels,
            kernel: k,
            conv_flops: conv_flops(n, channels, kernel),
            fft_flops: fft_flops(n, channels),
            direct_median_s: direct_s,
            fft_median_s: fft_s,
            max_abs_diff,
            conv_params_table: conv_t,
            conv_params_counted: conv_c,
            ag_params_table: ag_t,
            ag_params_counted: ag_c,
            afgn_params_table: afgn_t,
            afgn_params_counted: afgn_c,
            filter_params_counted: filt_c,
        });
    }
    rows.sort_by_key(|r| r.size);
    let crossover = crossover(&rows);
    Ok(BenchTable { rows, crossover })
}

/// Smallest size where the FFT path wins and keeps winning for every larger
/// size in the table.
pub fn crossover(rows: &[BenchRow]) -> Option<usize> {
    let mut found = None;
    for r in rows.iter().rev() {
        if r.fft_median_s < r.direct_median_s {
            found = Some(r.size);
        } else {
            break;
        }
    }
    found
}

pub const BENCH_CSV_HEADER: &str = "size,channels,kernel,conv_flops,fft_flops,flop_ratio,direct_median_s,fft_median_s,speedup,max_abs_diff,conv_params_table,conv_params_counted,ag_params_table,ag_params_counted,afgn_params_table,afgn_params_counted,filter_params_counted";

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6e},{:.6e},{:.4},{:.3e},{},{},{},{},{},{},{}",
                r.size,
                r.channels,
                r.kernel,
                r.conv_flops,
                r.fft_flops,
                r.conv_flops / r.fft_flops,
                r.direct_median_s,
                r.fft_median_s,
                r.direct_median_s / r.fft_median_s,
                r.max_abs_diff,
                r.conv_params_table,
                r.conv_params_counted,
                r.ag_params_table,
                r.ag_params_counted,
                r.afgn_params_table,
                r.afgn_params_counted,
                r.filter_params_counted,
            );
        }
        let _ = writeln!(out, "# crossover,{}", self.crossover.map_or_else(|| "none".to_string(), |c| c.to_string()));
        out
    }
}
