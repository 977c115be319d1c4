//! Gradient saliency: `|∂(sum of foreground logits)/∂input|`, scaled to
//! `[0, 1]` by its maximum.

use std::fmt::Write as _;

use freqgate_core::models::Model;
use freqgate_core::{Tape, Tensor};

use crate::error::Result;

/// Saliency of one `H × W` image. Foreground is the single output channel,
/// or every channel except class 0 for multi-class heads. Computed in f64.
pub fn saliency(model: &Model<f32>, image: &[f32]) -> Result<Vec<f64>> {
    let model = model.cast::<f64>();
    let spec = &model.spec;
    let (s, classes) = (spec.image_size, spec.num_classes);
    let x = Tensor::new(&[1, spec.in_channels, s, s], image.iter().map(|&v| v as f64).collect())?;
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, false);
    let xv = tape.leaf(x);
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let logits = model.forward(&mut tape, &p, xv, false, &mut rng)?;
    let plane = s * s;
    let weights: Vec<f64> = (0..classes * plane).map(|i| if classes == 1 || i >= plane { 1.0 } else { 0.0 }).collect();
    let total = tape.dot_const(logits, &weights)?;
    let grads = tape.backward(total)?;
    let g = grads.get_or_zeros(xv);
    // Sum magnitudes over input channels.
    let mut heat = vec![0.0; plane];
    for (i, v) in g.data().iter().enumerate() {
        heat[i % plane] += v.abs();
    }
    let max = heat.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        heat.iter_mut().for_each(|v| *v /= max);
    }
    Ok(heat)
}

pub fn to_csv(heat: &[f64], width: usize) -> String {
    let mut out = String::new();
    for row in heat.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Binary 8-bit PGM (`P5`).
pub fn to_pgm(heat: &[f64], width: usize) -> Vec<u8> {
    let height = heat.len() / width.max(1);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(heat.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
