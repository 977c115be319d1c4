//! Named parameter registry.
//!
//! Every tensor is initialised from its own RNG stream, keyed by the store
//! seed and the parameter name. Two models that share parameter names
//! therefore share initial values no matter which other components they
//! contain or in which order those were built.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Standard deviation of every Gaussian-initialised weight.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// FNV-1a over the seed bytes followed by the name bytes.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore { seed, names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Register a tensor under a unique name.
    pub fn insert(&mut self, name: &str, t: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(TensorError::Invalid(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(t);
        Ok(ParamId(self.names.len() - 1))
    }

    /// Gaussian `N(0, std²)` drawn in f64 from the parameter's own stream.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, name));
        let dist = Normal::new(0.0, std).map_err(|e| TensorError::Invalid(e.to_string()))?;
        let t = Tensor::from_fn(shape, |_| T::of(dist.sample(&mut rng)));
        self.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::full(shape, T::one()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Parameter counts grouped by layer, where the layer is the name up to
    /// its last `.`; rows keep registration order.
    pub fn count_table(&self) -> ParamTable {
        let mut rows: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.iter() {
            let layer = name.rsplit_once('.').map_or(name, |(l, _)| l);
            match rows.last_mut() {
                Some((l, n)) if l == layer => *n += t.numel(),
                _ => rows.push((layer.to_string(), t.numel())),
            }
        }
        ParamTable { total: rows.iter().map(|r| r.1).sum(), rows }
    }

    /// Record every parameter on the tape. With `trainable = false` they
    /// enter as constants and receive no gradient.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Bound { vars }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            seed: self.seed,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Tape handles for a store's parameters, in registration order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wrap handles that are already on a tape, one per parameter in
    /// registration order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTable {
    pub rows: Vec<(String, usize)>,
    pub total: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_name_same_values_regardless_of_order() {
        let mut a = ParamStore::<f32>::new(7);
        a.normal("x.w", &[3, 3], INIT_STD).unwrap();
        a.normal("y.w", &[4], INIT_STD).unwrap();
        let mut b = ParamStore::<f32>::new(7);
        b.normal("y.w", &[4], INIT_STD).unwrap();
        b.normal("x.w", &[3, 3], INIT_STD).unwrap();
        assert_eq!(a.by_name("x.w"), b.by_name("x.w"));
        assert_eq!(a.by_name("y.w"), b.by_name("y.w"));
        let mut c = ParamStore::<f32>::new(8);
        c.normal("x.w", &[3, 3], INIT_STD).unwrap();
        assert_ne!(a.by_name("x.w"), c.by_name("x.w"));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f64>::new(0);
        s.zeros("a", &[1]).unwrap();
        assert!(s.zeros("a", &[2]).is_err());
    }

    #[test]
    fn init_statistics() {
        let mut s = ParamStore::<f64>::new(1);
        let id = s.normal("w", &[100, 100], INIT_STD).unwrap();
        let d = s.get(id).data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!(mean.abs() < 1e-3);
        assert!((sd - INIT_STD).abs() < 1e-3);
    }

    #[test]
    fn count_table_groups_by_layer() {
        let mut s = ParamStore::<f32>::new(0);
        assert_eq!(s.count_table().total, 0);
        s.zeros("enc0.conv1.w", &[4, 1, 3, 3]).unwrap();
        s.zeros("enc0.conv1.b", &[4]).unwrap();
        s.zeros("head.w", &[1, 4, 1, 1]).unwrap();
        let t = s.count_table();
        assert_eq!(t.rows, vec![("enc0.conv1".to_string(), 40), ("head".to_string(), 4)]);
        assert_eq!(t.total, 44);
        assert_eq!(s.numel(), 44);
    }
}
