#![allow(dead_code)]

use freqgate_data::{SliceSample, VolumeRecord};

/// Hand-assembled single-file NIfTI-1 image. `dims` is `[nx, ny, nz]`, the
/// payload starts at byte 352 and `payload` is already encoded.
pub fn nifti_bytes(
    dims: [i16; 3],
    datatype: i16,
    bitpix: i16,
    pixdim: [f32; 3],
    payload: &[u8],
    big_endian: bool,
) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    let put_i32 = |h: &mut Vec<u8>, at: usize, v: i32| {
        let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        h[at..at + 4].copy_from_slice(&b);
    };
    let put_i16 = |h: &mut Vec<u8>, at: usize, v: i16| {
        let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        h[at..at + 2].copy_from_slice(&b);
    };
    let put_f32 = |h: &mut Vec<u8>, at: usize, v: f32| {
        let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        h[at..at + 4].copy_from_slice(&b);
    };
    put_i32(&mut h, 0, 348);
    put_i16(&mut h, 40, 3);
    for (i, d) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * i, *d);
    }
    for i in 3..7 {
        put_i16(&mut h, 42 + 2 * i, 1);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, 80 + 4 * i, *p);
    }
    put_f32(&mut h, 108, 352.0);
    h[344..348].copy_from_slice(b"n+1\0");
    h.extend_from_slice(payload);
    h
}

pub fn i16_payload(values: &[i16], big_endian: bool) -> Vec<u8> {
    values.iter().flat_map(|v| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() }).collect()
}

pub fn random_volume(id: &str, dims: [usize; 3], seed: u64) -> VolumeRecord {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let image = (0..n).map(|_| r.gen_range(-3.0f32..3.0)).collect();
    let mask = (0..n).map(|_| r.gen_bool(0.3) as u8).collect();
    VolumeRecord::new(id, dims, [1.5, 0.7, 0.7], image, mask).unwrap()
}

/// Volume whose mask is non-empty exactly on `slices`.
pub fn labelled_on(slices: &[usize], dims: [usize; 3]) -> VolumeRecord {
    let [d, h, w] = dims;
    let mut mask = vec![0u8; d * h * w];
    for &z in slices {
        for y in h / 4..h / 2 {
            for x in w / 4..w / 2 {
                mask[(z * h + y) * w + x] = 1;
            }
        }
    }
    let image = (0..d * h * w).map(|i| ((i * 31) % 17) as f32).collect();
    VolumeRecord::new("lab", dims, [1.0; 3], image, mask).unwrap()
}

/// A disc of radius `r` centred at `(cy, cx)` on a smooth image.
pub fn blob(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> SliceSample {
    let mut image = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let inside = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r;
            image.push((y as f32 * 0.1).sin() + (x as f32 * 0.07).cos() + inside as u8 as f32);
            mask.push(inside as u8);
        }
    }
    SliceSample::new("blob", 0, h, w, image, mask).unwrap()
}

/// Number of 6-connected foreground components of a `[d, h, w]` mask.
pub fn components_3d(mask: &[u8], dims: [usize; 3]) -> usize {
    let [d, h, w] = dims;
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if mask[start] == 0 || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
            let mut push = |j: usize| {
                if mask[j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if z > 0 {
                push(i - h * w);
            }
            if z + 1 < d {
                push(i + h * w);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
        }
    }
    count
}
