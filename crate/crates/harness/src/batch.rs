use freqgate_core::losses::one_hot;
use freqgate_core::Tensor;
use freqgate_data::SliceSample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{HarnessError, Result};

/// Index batches over a dataset of `n` samples.
pub struct Batches;

impl Batches {
    pub fn sequential(n: usize, batch: usize) -> Vec<Vec<usize>> {
        let idx: Vec<usize> = (0..n).collect();
        idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
    }

    /// A fresh permutation, then chunks. The last batch may be short.
    pub fn shuffled<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
    }
}

fn check(s: &SliceSample, size: usize) -> Result<()> {
    if s.height != size || s.width != size {
        return Err(HarnessError::Config(format!(
            "slice {}#{} is {}x{}, model expects {size}x{size}",
            s.volume_id, s.slice_index, s.height, s.width
        )));
    }
    Ok(())
}

/// `B × 1 × S × S` image tensor.
pub fn image_batch(samples: &[SliceSample], idx: &[usize], size: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(idx.len() * size * size);
    for &i in idx {
        check(&samples[i], size)?;
        data.extend_from_slice(&samples[i].image);
    }
    Ok(Tensor::new(&[idx.len(), 1, size, size], data)?)
}

/// Binary target for one output channel, one-hot over `classes` otherwise.
pub fn target_batch(samples: &[SliceSample], idx: &[usize], size: usize, classes: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(idx.len() * size * size);
    for &i in idx {
        check(&samples[i], size)?;
        data.extend(samples[i].mask.iter().map(|&m| m as f32));
    }
    let labels = Tensor::new(&[idx.len(), 1, size, size], data)?;
    if classes == 1 {
        Ok(labels)
    } else {
        Ok(one_hot(&labels, classes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn batches_cover_every_index_once() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let b = Batches::shuffled(10, 4, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(Batches::sequential(5, 2), vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn targets_one_hot_for_multiclass() {
        let s = SliceSample::new("v", 0, 2, 2, vec![0.0; 4], vec![0, 1, 1, 0]).unwrap();
        let t = target_batch(&[s.clone()], &[0], 2, 2).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert!(image_batch(&[s], &[0], 3).is_err());
    }
}
