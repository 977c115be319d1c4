use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// Which volume ids belong to which split, and the seed that shuffled them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub split_seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl DatasetManifest {
    /// Shuffles `ids` with `seed` and deals `n_train`, `n_val`, then the
    /// remainder to test. Ids inside each split are sorted again so the
    /// manifest reads stably.
    pub fn split(ids: &[String], seed: u64, n_train: usize, n_val: usize) -> Result<Self> {
        if n_train + n_val > ids.len() {
            return Err(DataError::Config(format!(
                "cannot take {n_train} train and {n_val} val volumes from {}",
                ids.len()
            )));
        }
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut take = |n: usize| {
            let mut part: Vec<String> = shuffled.drain(..n).collect();
            part.sort();
            part
        };
        let train = take(n_train);
        let val = take(n_val);
        let test = take(ids.len() - n_train - n_val);
        Ok(DatasetManifest { split_seed: seed, train, val, test })
    }

    pub fn validate(&self) -> Result<()> {
        let mut all: Vec<&String> = self.train.iter().chain(&self.val).chain(&self.test).collect();
        all.sort();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::Config(format!("volume {} appears in more than one split", w[0])));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| DataError::Sidecar { path: path.display().to_string(), reason: e.to_string() })?;
        m.validate()?;
        Ok(m)
    }
}
