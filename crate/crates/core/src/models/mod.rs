//! The three U-Net variants.
//!
//! All share one trunk: `depth` encoder blocks with max-pooling, a
//! bottleneck, and a mirrored decoder. Each decoder level upsamples, applies
//! a 3×3 conv with relu to obtain the gating signal `g`, passes the encoder
//! skip `x` through the level's gate, concatenates `[gated x, g]` and runs a
//! conv block. A 1×1 conv produces the logits. Only the gate differs between
//! kinds, and since every parameter is seeded by its own name the trunk
//! initialises identically across kinds.

mod checkpoint;

pub use checkpoint::{Checkpoint, Manifest, NamedArray, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::layers::in_layer;
use crate::layers::{AttentionFilterGateLayer, AttentionGateLayer, Conv2dLayer, ConvBlock, GateScoring};
use crate::params::{Bound, ParamStore, ParamTable};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unet,
    AttentionUnet,
    Gfnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Unet, ModelKind::AttentionUnet, ModelKind::Gfnet];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Unet => "unet",
            ModelKind::AttentionUnet => "attention_unet",
            ModelKind::Gfnet => "gfnet",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn one() -> usize {
    1
}
fn base_filters() -> usize {
    64
}
fn depth() -> usize {
    4
}
fn image_size() -> usize {
    256
}
fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn gate_eps() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "one")]
    pub num_classes: usize,
    #[serde(default = "base_filters")]
    pub base_filters: usize,
    #[serde(default = "depth")]
    pub depth: usize,
    #[serde(default = "image_size")]
    pub image_size: usize,
    #[serde(default = "yes")]
    pub dropout_decoder: bool,
    #[serde(default = "half")]
    pub dropout_p: f64,
    #[serde(default)]
    pub gate_scoring: GateScoring,
    /// Added to the filter gate's spectral variance. A relu-dead gating
    /// channel is spatially constant and has zero variance; zero here turns
    /// that into an error instead.
    #[serde(default = "gate_eps")]
    pub gate_variance_eps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    /// 256×256 input, 64 base filters, depth 4.
    pub fn full_scale(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            in_channels: 1,
            num_classes: 1,
            base_filters: 64,
            depth: 4,
            image_size: 256,
            dropout_decoder: true,
            dropout_p: 0.5,
            gate_scoring: GateScoring::SigmoidComplex,
            gate_variance_eps: 1e-6,
            seed: 0,
        }
    }

    /// 64×64 input, 8 base filters, depth 3.
    pub fn desk_scale(kind: ModelKind) -> Self {
        ModelSpec { base_filters: 8, depth: 3, image_size: 64, ..Self::full_scale(kind) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TensorError::Invalid(m));
        if self.base_filters == 0 || self.in_channels == 0 || self.num_classes == 0 {
            return bad("base_filters, in_channels and num_classes must be at least 1".into());
        }
        if self.depth == 0 || self.depth > 16 {
            return bad(format!("depth {} outside 1..=16", self.depth));
        }
        let step = 1usize << self.depth;
        if self.image_size == 0 || self.image_size % step != 0 {
            return bad(format!("image_size {} not divisible by 2^depth = {step}", self.image_size));
        }
        if !(self.gate_variance_eps >= 0.0 && self.gate_variance_eps.is_finite()) {
            return bad(format!("gate_variance_eps {} must be finite and non-negative", self.gate_variance_eps));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }

    /// Channels at encoder level `l` (0 is the finest).
    pub fn channels_at(&self, level: usize) -> usize {
        self.base_filters << level
    }

    pub fn size_at(&self, level: usize) -> usize {
        self.image_size >> level
    }
}

#[derive(Clone, Debug)]
pub enum SkipGate {
    Identity,
    Attention(AttentionGateLayer),
    Filter(AttentionFilterGateLayer),
}

impl SkipGate {
    pub fn param_count(&self) -> usize {
        match self {
            SkipGate::Identity => 0,
            SkipGate::Attention(l) => l.param_count(),
            SkipGate::Filter(l) => l.param_count(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLevel {
    pub level: usize,
    pub up: Conv2dLayer,
    pub gate: SkipGate,
    pub block: ConvBlock,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub params: ParamStore<T>,
    pub encoders: Vec<ConvBlock>,
    pub bottleneck: ConvBlock,
    /// Coarsest level first, in forward order.
    pub decoders: Vec<DecoderLevel>,
    pub head: Conv2dLayer,
}

impl<T: Scalar> Model<T> {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new(spec.seed);
        let mut encoders = Vec::with_capacity(spec.depth);
        let mut in_c = spec.in_channels;
        for l in 0..spec.depth {
            encoders.push(ConvBlock::new(&mut store, &format!("enc{l}"), in_c, spec.channels_at(l), None)?);
            in_c = spec.channels_at(l);
        }
        let bottleneck = ConvBlock::new(&mut store, "bottleneck", in_c, spec.channels_at(spec.depth), None)?;
        let dropout = spec.dropout_decoder.then_some(spec.dropout_p);
        let mut decoders = Vec::with_capacity(spec.depth);
        for l in (0..spec.depth).rev() {
            let c = spec.channels_at(l);
            let s = spec.size_at(l);
            let name = format!("dec{l}");
            let up = Conv2dLayer::new(&mut store, &format!("{name}.up"), 2 * c, c, 3, true)?;
            let gate_name = format!("{name}.gate");
            let f_int = (c / 2).max(1);
            let gate = match spec.kind {
                ModelKind::Unet => SkipGate::Identity,
                ModelKind::AttentionUnet => {
                    SkipGate::Attention(AttentionGateLayer::new(&mut store, &gate_name, c, c, f_int)?)
                }
                ModelKind::Gfnet => SkipGate::Filter(
                    AttentionFilterGateLayer::new(&mut store, &gate_name, c, c, f_int, s, s, spec.gate_scoring)?
                        .with_variance_eps(spec.gate_variance_eps),
                ),
            };
            let block = ConvBlock::new(&mut store, &format!("{name}.block"), 2 * c, c, dropout)?;
            decoders.push(DecoderLevel { level: l, up, gate, block });
        }
        let head = Conv2dLayer::new(&mut store, "head", spec.base_filters, spec.num_classes, 1, true)?;
        Ok(Model { spec: spec.clone(), params: store, encoders, bottleneck, decoders, head })
    }

    /// Build from `spec` and take parameter values from `store`, which must
    /// hold exactly the expected names and shapes in order.
    pub fn with_params(spec: &ModelSpec, store: ParamStore<T>) -> Result<Self> {
        let mut m = Self::build(spec)?;
        if m.params.names() != store.names() {
            return Err(TensorError::Checkpoint(format!(
                "parameter names do not match a {} model ({} expected, {} given)",
                spec.kind,
                m.params.len(),
                store.len()
            )));
        }
        for ((name, a), b) in m.params.iter().zip(store.tensors()) {
            if a.shape() != b.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        m.params = store;
        Ok(m)
    }

    pub fn param_table(&self) -> ParamTable {
        self.params.count_table()
    }

    /// Parameters belonging to skip-connection gates.
    pub fn gate_param_count(&self) -> usize {
        self.decoders.iter().map(|d| d.gate.param_count()).sum()
    }

    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound, x: Var, training: bool, rng: &mut dyn RngCore) -> Result<Var> {
        let s = &self.spec;
        let shape = tape.shape(x);
        if shape.len() != 4 || shape[1..] != [s.in_channels, s.image_size, s.image_size] {
            return Err(TensorError::Shape {
                op: "model_forward",
                lhs: vec![s.in_channels, s.image_size, s.image_size],
                rhs: shape.to_vec(),
            });
        }
        let mut skips = Vec::with_capacity(s.depth);
        let mut h = x;
        for enc in &self.encoders {
            h = enc.forward(tape, p, h, training, rng)?;
            skips.push(h);
            h = in_layer(&enc.name, tape.max_pool2(h))?;
        }
        h = self.bottleneck.forward(tape, p, h, training, rng)?;
        for dec in &self.decoders {
            let skip = skips.pop().expect("one skip per decoder level");
            let u = in_layer(&dec.up.name, tape.upsample2(h))?;
            let g = dec.up.forward(tape, p, u)?;
            let g = in_layer(&dec.up.name, tape.relu(g))?;
            let gated = match &dec.gate {
                SkipGate::Identity => skip,
                SkipGate::Attention(l) => l.forward(tape, p, g, skip)?,
                SkipGate::Filter(l) => l.forward(tape, p, g, skip)?,
            };
            let cat = in_layer(&dec.block.name, tape.concat_channels(gated, g))?;
            h = dec.block.forward(tape, p, cat, training, rng)?;
        }
        self.head.forward(tape, p, h)
    }

    /// Inference-mode logits for a batch.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let out = self.forward(&mut tape, &p, xv, false, &mut rng)?;
        Ok(tape.value(out))
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
            encoders: self.encoders.clone(),
            bottleneck: self.bottleneck.clone(),
            decoders: self.decoders.clone(),
            head: self.head.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind) -> ModelSpec {
        ModelSpec { base_filters: 4, depth: 2, image_size: 16, seed: 5, ..ModelSpec::full_scale(kind) }
    }

    #[test]
    fn output_shape_matches_input() {
        for kind in ModelKind::ALL {
            let m = Model::<f32>::build(&tiny(kind)).unwrap();
            let x = Tensor::from_fn(&[2, 1, 16, 16], |i| ((i * 37 % 11) as f32 - 5.0) / 5.0);
            let y = m.predict(&x).unwrap();
            assert_eq!(y.shape(), &[2, 1, 16, 16], "{kind}");
            assert!(y.is_finite());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = tiny(ModelKind::Unet);
        s.image_size = 18;
        assert!(Model::<f32>::build(&s).is_err());
        s.image_size = 16;
        s.base_filters = 0;
        assert!(Model::<f32>::build(&s).is_err());
        s.base_filters = 4;
        s.dropout_p = 1.0;
        assert!(Model::<f32>::build(&s).is_err());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let m = Model::<f32>::build(&tiny(ModelKind::Unet)).unwrap();
        assert!(m.predict(&Tensor::zeros(&[1, 1, 8, 8])).is_err());
    }

    #[test]
    fn trunk_is_shared_across_kinds() {
        let base = Model::<f32>::build(&tiny(ModelKind::Unet)).unwrap();
        for kind in [ModelKind::AttentionUnet, ModelKind::Gfnet] {
            let m = Model::<f32>::build(&tiny(kind)).unwrap();
            for (name, t) in base.params.iter() {
                assert_eq!(m.params.by_name(name), Some(t), "{kind} {name}");
            }
            let extra: Vec<_> = m.params.names().iter().filter(|n| base.params.id(n).is_none()).collect();
            assert!(extra.iter().all(|n| n.contains(".gate.")));
            assert_eq!(m.params.numel() - base.params.numel(), m.gate_param_count());
        }
    }

    #[test]
    fn spec_json_defaults() {
        let s: ModelSpec = serde_json::from_str(r#"{"kind":"gfnet"}"#).unwrap();
        assert_eq!(s, ModelSpec::full_scale(ModelKind::Gfnet));
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"gfnet","filters":3}"#).is_err());
    }
}
