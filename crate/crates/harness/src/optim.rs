//! Optimizers with decoupled weight decay.
//!
//! Decay multiplies each weight by `1 − lr·wd` before the gradient update and
//! never passes through the gradient or the moment estimates. With a zero
//! gradient and fresh state a step is exactly that multiplication.

use freqgate_core::models::NamedArray;
use freqgate_core::params::ParamStore;
use freqgate_core::Tensor;

use crate::config::{OptimizerKind, TrainConfig};
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl OptimConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        OptimConfig {
            kind: cfg.optimizer,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            momentum: cfg.momentum,
            betas: cfg.betas,
            eps: cfg.adam_eps,
        }
    }

    /// Per-step shrink factor.
    pub fn decay(&self) -> f32 {
        (1.0 - self.lr * self.weight_decay) as f32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub cfg: OptimConfig,
    pub steps: u64,
    /// Momentum buffer (SGD) or first moment (AdamW), one per parameter.
    first: Vec<Vec<f32>>,
    /// Second moment, AdamW only.
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig, params: &ParamStore<f32>) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect::<Vec<_>>();
        let second = if cfg.kind == OptimizerKind::Adamw { zeros() } else { Vec::new() };
        Optimizer { cfg, steps: 0, first: zeros(), second }
    }

    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &[Tensor<f32>]) {
        assert_eq!(grads.len(), self.first.len(), "one gradient per parameter");
        self.steps += 1;
        let decay = self.cfg.decay();
        let lr = self.cfg.lr as f32;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                let mu = self.cfg.momentum as f32;
                for ((w, g), buf) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.first) {
                    for ((wi, &gi), bi) in w.data_mut().iter_mut().zip(g.data()).zip(buf.iter_mut()) {
                        *bi = mu * *bi + gi;
                        *wi = *wi * decay - lr * *bi;
                    }
                }
            }
            OptimizerKind::Adamw => {
                let (b1, b2) = self.cfg.betas;
                let t = self.steps as i32;
                let c1 = (1.0 - b1.powi(t)) as f32;
                let c2 = (1.0 - b2.powi(t)) as f32;
                let (b1, b2, eps) = (b1 as f32, b2 as f32, self.cfg.eps as f32);
                for (((w, g), m), v) in
                    params.tensors_mut().iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second)
                {
                    for (((wi, &gi), mi), vi) in
                        w.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *wi = *wi * decay - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }

    /// Moment buffers as checkpoint arrays named `opt/<slot>/<param>`.
    pub fn state_arrays(&self, params: &ParamStore<f32>) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for (slot, bufs) in [("m", &self.first), ("v", &self.second)] {
            for (buf, (name, t)) in bufs.iter().zip(params.iter()) {
                out.push(NamedArray {
                    name: format!("opt/{slot}/{name}"),
                    tensor: Tensor::new(t.shape(), buf.clone()).expect("buffer matches parameter"),
                });
            }
        }
        out
    }

    /// Restores buffers written by [`Optimizer::state_arrays`].
    pub fn restore(
        cfg: OptimConfig,
        params: &ParamStore<f32>,
        steps: u64,
        lookup: impl Fn(&str) -> Option<Tensor<f32>>,
    ) -> Result<Self> {
        let mut opt = Optimizer::new(cfg, params);
        opt.steps = steps;
        let fill = |slot: &str, bufs: &mut Vec<Vec<f32>>| -> Result<()> {
            for (buf, (name, t)) in bufs.iter_mut().zip(params.iter()) {
                let key = format!("opt/{slot}/{name}");
                let arr = lookup(&key)
                    .ok_or_else(|| HarnessError::Config(format!("checkpoint lacks optimizer array {key}")))?;
                if arr.shape() != t.shape() {
                    return Err(HarnessError::Config(format!("optimizer array {key} has shape {:?}", arr.shape())));
                }
                *buf = arr.into_data();
            }
            Ok(())
        };
        fill("m", &mut opt.first)?;
        fill("v", &mut opt.second)?;
        Ok(opt)
    }
}
