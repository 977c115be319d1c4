//! Single-file checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "FGUNCKPT"
//! version      u32
//! manifest     u64 length, then UTF-8 JSON
//! arrays       u32 count, then per array:
//!                u32 name length, name bytes,
//!                u32 rank, rank × u64 extents,
//!                numel × f32
//! ```
//!
//! Arrays keep their insertion order and the manifest carries no clock
//! readings, so saving the same state twice yields identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FGUNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Prefix of arrays that hold model parameters; anything else (optimizer
/// state, for instance) is carried through untouched.
const PARAM_PREFIX: &str = "param/";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ModelSpec,
    pub seed: u64,
    pub step: u64,
    pub epoch: u64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Free-form state owned by the caller, such as optimizer settings.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub arrays: Vec<NamedArray>,
}

fn fmt_err(m: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(m.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            fmt_err(format!("truncated: need {n} bytes at offset {}, have {}", self.pos, self.buf.len() - self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| fmt_err("length overflows usize"))
    }
}

impl Checkpoint {
    /// Snapshot model parameters (cast to f32) plus any extra arrays.
    pub fn from_model<T: Scalar>(
        model: &Model<T>,
        step: u64,
        epoch: u64,
        metrics: BTreeMap<String, f64>,
        extra: serde_json::Value,
        extra_arrays: Vec<NamedArray>,
    ) -> Self {
        let mut arrays: Vec<NamedArray> = model
            .params
            .iter()
            .map(|(n, t)| NamedArray { name: format!("{PARAM_PREFIX}{n}"), tensor: t.cast() })
            .collect();
        arrays.extend(extra_arrays);
        Checkpoint {
            manifest: Manifest { spec: model.spec.clone(), seed: model.spec.seed, step, epoch, metrics, extra },
            arrays,
        }
    }

    /// Rebuild the model described by the manifest with the stored weights.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let mut store = ParamStore::new(self.manifest.spec.seed);
        for a in &self.arrays {
            if let Some(name) = a.name.strip_prefix(PARAM_PREFIX) {
                store.insert(name, a.tensor.cast())?;
            }
        }
        Model::with_params(&self.manifest.spec, store)
    }

    pub fn array(&self, name: &str) -> Option<&Tensor<f32>> {
        self.arrays.iter().find(|a| a.name == name).map(|a| &a.tensor)
    }

    /// Arrays that are not model parameters.
    pub fn extra_arrays(&self) -> impl Iterator<Item = &NamedArray> {
        self.arrays.iter().filter(|a| !a.name.starts_with(PARAM_PREFIX))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest).map_err(|e| fmt_err(e.to_string()))?;
        let mut out =
            Vec::with_capacity(manifest.len() + 64 + self.arrays.iter().map(|a| 4 * a.tensor.numel()).sum::<usize>());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.tensor.rank() as u32).to_le_bytes());
            for &d in a.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in a.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(fmt_err(format!("unsupported version {version}")));
        }
        let mlen = r.len()?;
        let manifest: Manifest = serde_json::from_slice(r.take(mlen)?).map_err(|e| fmt_err(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| fmt_err("array name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            if rank > 4 {
                return Err(fmt_err(format!("array `{name}` has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let numel =
                shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| fmt_err("shape overflow"))?;
            let bytes = r.take(numel.checked_mul(4).ok_or_else(|| fmt_err("shape overflow"))?)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            arrays.push(NamedArray { name, tensor: Tensor::new(&shape, data)? });
        }
        if r.pos != buf.len() {
            return Err(fmt_err(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint { manifest, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
