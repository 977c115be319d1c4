//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use freqgate_core::fft::{irfft2, rfft2};
use freqgate_core::gradcheck::{grad_check, GradCheckOptions};
use freqgate_core::layers::{AttentionFilterGateLayer, AttentionGateLayer, ConvBlock, GateScoring, GlobalFilterLayer};
use freqgate_core::losses::{bce_dice_loss, bce_loss, ce_multiclass, dice_loss};
use freqgate_core::metrics::Overlap;
use freqgate_core::models::{Model, ModelKind, ModelSpec};
use freqgate_core::params::{Bound, ParamStore};
use freqgate_core::{Tape, Tensor, Var};
use freqgate_data::synth::{synth_dataset, volume_id, SynthConfig};
use freqgate_data::{
    augment, preprocess_dataset, replay, AugmentConfig, DatasetManifest, PreprocessConfig, SliceSample, VolumeRecord,
};
use freqgate_harness::bench::{bench_complexity, fft_filter, kernel_spectrum};
use freqgate_harness::train::{BEST_CHECKPOINT, LAST_CHECKPOINT, VAL_METRICS};
use freqgate_harness::{train, TrainConfig, TrainData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Orthonormal DFT by direct summation, cut to the half spectrum and
/// interleaved as `(re, im)`.
fn naive_half_dft(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let s = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::new();
    for k in 0..h {
        for l in 0..w / 2 + 1 {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let a = -2.0 * PI * ((k * m) as f64 / h as f64 + (l * n) as f64 / w as f64);
                    re += x[m * w + n] * a.cos();
                    im += x[m * w + n] * a.sin();
                }
            }
            out.push(re * s);
            out.push(im * s);
        }
    }
    out
}

fn fft_correctness() -> Verdict {
    let started = Instant::now();
    let (mut dft_err, mut trip_err) = (0.0f64, 0.0f64);
    for h in 1..=16 {
        for w in 1..=16 {
            let x = random(&[1, 1, h, w], (h * 17 + w) as u64);
            let s = rfft2(&x).unwrap();
            dft_err = dft_err.max(max_abs(s.data(), &naive_half_dft(x.data(), h, w)));
            trip_err = trip_err.max(irfft2(&s, h, w).unwrap().max_abs_diff(&x));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = dft_err < 1e-9 && trip_err < 1e-10 && secs < 10.0;
    (pass, format!("max DFT error {dft_err:.2e}, round trip {trip_err:.2e}, {secs:.2} s"))
}

fn circular_conv(x: &[f64], n: usize, k: &[f64], ks: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..ks {
                for b in 0..ks {
                    y[i * n + j] += k[a * ks + b] * x[((i + n - a) % n) * n + (j + n - b) % n];
                }
            }
        }
    }
    y
}

fn convolution_theorem() -> Verdict {
    let mut worst = 0.0f64;
    for n in [8, 16, 32] {
        let x = random(&[1, 1, n, n], n as u64);
        let k = random(&[n, n], 100 + n as u64);
        let want = circular_conv(x.data(), n, k.data(), n);
        let got = fft_filter(&x, &kernel_spectrum(k.data(), n, n).unwrap()).unwrap();
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_abs(got.data(), &want) / scale);
    }
    let table = bench_complexity(&[4, 8, 16, 32, 64], 1, 0, 20, 0).unwrap();
    let speedups: Vec<String> =
        table.rows.iter().map(|r| format!("{}:{:.1}x", r.size, r.direct_median_s / r.fft_median_s)).collect();
    let pass = worst < 1e-8 && table.crossover.is_some();
    let cross = table.crossover.map_or("none".to_string(), |c| c.to_string());
    (pass, format!("max relative error {worst:.2e}, measured crossover N={cross} (speedups {})", speedups.join(" ")))
}

fn project(t: &mut Tape<f64>, v: Var, seed: u64) -> freqgate_core::Result<Var> {
    let n = t.data(v).len();
    let w = random(&[n], seed);
    t.dot_const(v, w.data())
}

/// Finite-difference check of a layer with its parameters as extra inputs.
fn layer_fd(
    data: Vec<Tensor<f64>>,
    store: &ParamStore<f64>,
    f: impl Fn(&mut Tape<f64>, &Bound, &[Var]) -> freqgate_core::Result<Var>,
) -> f64 {
    let k = data.len();
    let mut inputs = data;
    inputs.extend(store.tensors().iter().enumerate().map(|(i, t)| random(t.shape(), 500 + i as u64)));
    let r = grad_check(
        |t, v| {
            let p = Bound::from_vars(v[k..].to_vec());
            let y = f(t, &p, &v[..k])?;
            project(t, y, 77)
        },
        &inputs,
        GradCheckOptions::with_tol(1e-5),
    )
    .unwrap();
    if r.passed {
        r.max_rel_err
    } else {
        f64::INFINITY
    }
}

fn gradient_integrity() -> Verdict {
    let mut results: Vec<(String, f64)> = Vec::new();
    let shapes = [[1usize, 2, 8, 8], [2, 4, 8, 6]];
    for (i, &[b, c, h, w]) in shapes.iter().enumerate() {
        let tag = |n: &str| format!("{n}#{i}");
        let mut store = ParamStore::new(1);
        let gf = GlobalFilterLayer::new(&mut store, "gf", c, h, w).unwrap();
        results.push((
            tag("global_filter"),
            layer_fd(vec![random(&[b, c, h, w], 3)], &store, |t, p, v| Ok(gf.forward(t, p, v[0])?.0)),
        ));

        let mut store = ParamStore::new(2);
        let afg =
            AttentionFilterGateLayer::new(&mut store, "afg", c, c, c / 2, h, w, GateScoring::SigmoidComplex).unwrap();
        let data = vec![random(&[b, c, h, w], 4), random(&[b, c, h, w], 5)];
        results.push((tag("attention_filter_gate"), layer_fd(data, &store, |t, p, v| afg.forward(t, p, v[0], v[1]))));

        let mut store = ParamStore::new(3);
        let ag = AttentionGateLayer::new(&mut store, "ag", c, c, (c / 2).max(1)).unwrap();
        let data = vec![random(&[b, c, h, w], 6), random(&[b, c, h, w], 7)];
        results.push((tag("attention_gate"), layer_fd(data, &store, |t, p, v| ag.forward(t, p, v[0], v[1]))));

        let mut store = ParamStore::new(4);
        let block = ConvBlock::new(&mut store, "blk", c, 3, Some(0.5)).unwrap();
        results.push((
            tag("conv_block"),
            layer_fd(vec![random(&[b, c, h, w], 8)], &store, |t, p, v| {
                let mut r = rng(1);
                block.forward(t, p, v[0], true, &mut r)
            }),
        ));

        let norm_in = vec![random(&[b, c, h, w], 9), random(&[c], 10), random(&[c], 11)];
        let r = grad_check(
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                project(t, y, 13)
            },
            &norm_in,
            GradCheckOptions::with_tol(1e-5),
        )
        .unwrap();
        results.push((tag("layer_norm"), if r.passed { r.max_rel_err } else { f64::INFINITY }));

        let s = [b, 1, h, w];
        let mut r = rng(20 + i as u64);
        let p = Tensor::from_fn(&s, |_| r.gen_range(0.05..0.95));
        let g = Tensor::from_fn(&s, |_| if r.gen_bool(0.5) { 1.0 } else { 0.0 });
        let opts = GradCheckOptions::with_tol(1e-5);
        let mut loss =
            |name: &str, f: &dyn Fn(&mut Tape<f64>, &[Var]) -> freqgate_core::Result<Var>, x: &Tensor<f64>| {
                let r = grad_check(f, std::slice::from_ref(x), opts).unwrap();
                results.push((tag(name), if r.passed { r.max_rel_err } else { f64::INFINITY }));
            };
        loss("bce", &|t, v| bce_loss(t, v[0], &g), &p);
        loss("dice", &|t, v| dice_loss(t, v[0], &g), &p);
        loss("bce_dice", &|t, v| bce_dice_loss(t, v[0], &g, 1.0), &p);
        let logits = random(&[b, 3, h, w], 30 + i as u64);
        let mut onehot = Tensor::zeros(&[b, 3, h, w]);
        for bi in 0..b {
            for px in 0..h * w {
                let c = r.gen_range(0..3);
                onehot.data_mut()[(bi * 3 + c) * h * w + px] = 1.0;
            }
        }
        loss(
            "ce",
            &|t, v| {
                let q = t.softmax_channels(v[0])?;
                ce_multiclass(t, q, &onehot)
            },
            &logits,
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.is_finite()).map(|r| r.0.as_str()).collect();
    let worst = results.iter().map(|r| r.1).filter(|e| e.is_finite()).fold(0.0, f64::max);
    if failed.is_empty() {
        (true, format!("{} checks, worst relative error {worst:.2e}", results.len()))
    } else {
        (false, format!("failed: {}", failed.join(", ")))
    }
}

fn identity_filter() -> Verdict {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (c, h, w) = (r.gen_range(1..4), r.gen_range(1..33), r.gen_range(1..33));
        let mut store = ParamStore::<f32>::new(0);
        let gf = GlobalFilterLayer::new(&mut store, "gf", c, h, w).unwrap();
        let weight = store.get_mut(gf.weight);
        weight.data_mut().chunks_exact_mut(2).for_each(|z| z.copy_from_slice(&[1.0, 0.0]));
        let x = Tensor::<f32>::from_fn(&[2, c, h, w], |_| r.gen_range(-1.0..1.0));
        let mut tape = Tape::new();
        let p = store.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let (y, _) = gf.forward(&mut tape, &p, xv).unwrap();
        worst = worst.max(tape.value(y).max_abs_diff(&x) as f64);
    }
    (worst < 1e-6, format!("100 inputs, max deviation {worst:.2e}"))
}

fn loss_metric_oracles() -> Verdict {
    let mut tape = Tape::<f64>::new();
    let p = tape.constant(Tensor::new(&[1, 1, 1, 4], vec![1.0, 1.0, 0.0, 0.0]).unwrap());
    let g = Tensor::new(&[1, 1, 1, 4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let dl = dice_loss(&mut tape, p, &g).unwrap();
    let dl = tape.data(dl)[0];
    let o = Overlap::from_masks(&[true, true, false, false], &[true, false, false, false]);
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..200);
        let density = r.gen_range(0.0..1.0);
        let a: Vec<bool> = (0..n).map(|_| r.gen_bool(density)).collect();
        let b: Vec<bool> = (0..n).map(|_| r.gen_bool(density)).collect();
        let m = Overlap::from_masks(&a, &b);
        worst = worst.max((m.dice() - 2.0 * m.iou() / (1.0 + m.iou())).abs());
    }
    let pass = (dl - 1.0 / 3.0).abs() <= 1e-5
        && (o.dice() - 2.0 / 3.0).abs() < 1e-12
        && (o.iou() - 0.5).abs() < 1e-12
        && worst < 1e-12;
    (pass, format!("dice_loss {dl:.6}, Dice {:.6}, IoU {:.6}, identity error {worst:.1e}", o.dice(), o.iou()))
}

fn synthetic_data(n_train: usize, n_val: usize, seed: u64, synth: &SynthConfig, pre: &PreprocessConfig) -> TrainData {
    let vols = synth_dataset(n_train + n_val, seed, synth).unwrap();
    let ids: Vec<String> = (0..vols.len()).map(volume_id).collect();
    let m = DatasetManifest::split(&ids, seed, n_train, n_val).unwrap();
    let pick = |names: &[String]| -> Vec<VolumeRecord> {
        names.iter().map(|id| vols.iter().find(|v| &v.id == id).unwrap().clone()).collect()
    };
    let train = preprocess_dataset(&pick(&m.train), pre, 1).unwrap();
    let val = preprocess_dataset(&pick(&m.val), pre, 1).unwrap();
    TrainData { train: train.samples, val: val.samples, notes: train.notes }
}

fn synthetic_end_to_end() -> Verdict {
    let started = Instant::now();
    let data = synthetic_data(40, 10, 0, &SynthConfig::default(), &PreprocessConfig::default());
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [ModelKind::Unet, ModelKind::AttentionUnet, ModelKind::Gfnet] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            model: ModelSpec::desk_scale(kind),
            epochs: 20,
            early_stop_dice: Some(0.90),
            out_dir: dir.path().to_path_buf(),
            ..TrainConfig::default()
        };
        let t = Instant::now();
        let out = train(&cfg, &data, false).unwrap();
        let dice = out.report.mean_dice_volume_weighted;
        pass &= dice >= 0.90 && out.epochs_run <= 20;
        lines.push(format!(
            "{} Dice {dice:.4} (slice-weighted {:.4}) IoU {:.4} after {} epochs in {:.0} s",
            kind.as_str(),
            out.report.mean_dice_slice_weighted,
            out.report.mean_iou_volume_weighted,
            out.epochs_run,
            t.elapsed().as_secs_f64()
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    pass &= secs < 30.0 * 60.0;
    lines.push(format!(
        "total {secs:.0} s on {cores} core(s), {} train / {} val slices",
        data.train.len(),
        data.val.len()
    ));
    (pass, lines.join("; "))
}

fn determinism() -> Verdict {
    let synth = SynthConfig { depth: 8, size: 32, ..SynthConfig::default() };
    let pre = PreprocessConfig { target_size: 32, margin: 8, ..PreprocessConfig::default() };
    let data = synthetic_data(3, 1, 9, &synth, &pre);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            model: ModelSpec { base_filters: 4, depth: 2, image_size: 32, ..ModelSpec::desk_scale(ModelKind::Gfnet) },
            preprocess: pre.clone(),
            augment: Some(AugmentConfig::default()),
            epochs: 2,
            out_dir: dir.path().to_path_buf(),
            ..TrainConfig::default()
        };
        train(&cfg, &data, false).unwrap();
        let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
        [read(&format!("{VAL_METRICS}.csv")), read(BEST_CHECKPOINT), read(LAST_CHECKPOINT)]
    };
    let (a, b) = (run(), run());
    let same = a.iter().zip(&b).map(|(x, y)| x == y).collect::<Vec<_>>();
    let bytes: usize = a.iter().map(Vec::len).sum();
    (same.iter().all(|&s| s), format!("metrics CSV / best / last identical: {same:?}, {bytes} bytes compared"))
}

fn conv3(i: usize, o: usize) -> usize {
    9 * i * o + o
}

/// Two 3×3 convolutions with per-channel affine normalization.
fn block(i: usize, o: usize) -> usize {
    conv3(i, o) + 2 * o + conv3(o, o) + 2 * o
}

fn unet_block_sum(f: usize, depth: usize) -> usize {
    let mut total = 0;
    let mut c_in = 1;
    for l in 0..depth {
        total += block(c_in, f << l);
        c_in = f << l;
    }
    total += block(c_in, f << depth);
    for l in 0..depth {
        let c = f << l;
        // Up-convolution from 2c to c, then a block over the concatenation.
        total += conv3(2 * c, c) + block(2 * c, c);
    }
    total + f + 1
}

fn parameter_accounting() -> Verdict {
    let mut filters_ok = true;
    for (c, h, w) in [(1, 8, 8), (8, 64, 64), (64, 256, 256), (3, 7, 9)] {
        let mut store = ParamStore::<f32>::new(0);
        let gf = GlobalFilterLayer::new(&mut store, "gf", c, h, w).unwrap();
        filters_ok &= gf.param_count() == 2 * c * h * (w / 2 + 1) && store.numel() == gf.param_count();
    }
    let spec = ModelSpec::full_scale(ModelKind::Unet);
    let model = Model::<f32>::build(&spec).unwrap();
    let counted = model.params.numel();
    let oracle = unet_block_sum(spec.base_filters, spec.depth);
    (
        filters_ok && counted == oracle && spec.base_filters == 64 && spec.depth == 4,
        format!("filter counts exact: {filters_ok}; U-Net(64, depth 4) counted {counted}, block sum {oracle}"),
    )
}

fn pipeline_fidelity() -> Verdict {
    let vols = synth_dataset(4, 3, &SynthConfig::default()).unwrap();
    let cfg = PreprocessConfig::default();
    let aug = AugmentConfig { p_rotate: 1.0, p_scale: 1.0, p_elastic: 1.0, ..AugmentConfig::default() };
    let mut r = rng(6);
    let (mut replays, mut mismatches) = (0, 0);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for v in &vols {
        for s in preprocess_dataset(std::slice::from_ref(v), &cfg, 1).unwrap().samples {
            let n = s.image.len() as f64;
            let mean = s.image.iter().map(|&x| x as f64).sum::<f64>() / n;
            let std = (s.image.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((std - 1.0).abs());
            let raw = SliceSample::from_volume(v, cfg.axis, s.slice_index);
            let augmented = augment(&s, &aug, &mut r).unwrap();
            for out in [&s, &augmented] {
                replays += 1;
                if replay(&raw, &out.transform_log).unwrap() != *out {
                    mismatches += 1;
                }
            }
        }
    }
    let pass = mismatches == 0 && worst_mean < 1e-5 && worst_std < 1e-3;
    (
        pass,
        format!("{replays} replays, {mismatches} mismatches; max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}"),
    )
}

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("fft correctness", fft_correctness),
        ("convolution theorem and crossover", convolution_theorem),
        ("gradient integrity", gradient_integrity),
        ("identity filter", identity_filter),
        ("loss and metric oracles", loss_metric_oracles),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("determinism", determinism),
        ("parameter accounting", parameter_accounting),
        ("pipeline fidelity", pipeline_fidelity),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let (pass, detail) = check();
        failures += !pass as usize;
        println!("{} criterion {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
