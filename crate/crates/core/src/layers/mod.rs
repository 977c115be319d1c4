//! Parameterised building blocks. Each layer owns [`ParamId`]s into a
//! [`ParamStore`](crate::params::ParamStore) and runs its forward on a tape
//! against a [`Bound`](crate::params::Bound) view of that store.

mod attention_gate;
mod conv;
mod filter_gate;
mod global_filter;

pub use attention_gate::AttentionGateLayer;
pub use conv::{Conv2dLayer, ConvBlock, InstanceNormLayer};
pub use filter_gate::{AttentionFilterGateLayer, FilterGateTrace, GateScoring};
pub use global_filter::GlobalFilterLayer;

use crate::error::{Result, TensorError};

/// Prefix non-finite errors with the layer that produced them.
pub(crate) fn in_layer<V>(name: &str, r: Result<V>) -> Result<V> {
    r.map_err(|e| match e {
        TensorError::NonFinite { op } => TensorError::NonFinite { op: format!("{name}/{op}") },
        other => other,
    })
}
