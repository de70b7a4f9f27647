//! Two-layer graph convolution with output and skip transforms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{GcnLayer, GcnParams};
use crate::autodiff::{SparseMatrix, Tape, Var};
use crate::error::{Error, Result};

/// Nonlinearity applied after neighborhood aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// One layer:
///
/// ```text
/// H  = act(Â · H_prev · W)
/// out = (H · O + β_O) + (H_prev · J + β_J)
/// ```
pub fn gcn_layer(
    tape: &mut Tape,
    adjacency: &Arc<SparseMatrix>,
    h_prev: Var,
    layer: &GcnLayer<Var>,
    activation: Activation,
) -> Result<Var> {
    let (n, _) = tape.shape(h_prev);
    if adjacency.shape() != (n, n) {
        return Err(Error::dim("gcn_layer", adjacency.shape(), tape.shape(h_prev)));
    }
    let aggregated = tape.sparse_matmul(adjacency, h_prev)?;
    let pre = tape.matmul(aggregated, layer.w)?;
    let h = activation.apply(tape, pre);
    let main = tape.matmul(h, layer.o)?;
    let main = tape.add(main, layer.o_bias)?;
    let skip = tape.matmul(h_prev, layer.j)?;
    let skip = tape.add(skip, layer.j_bias)?;
    tape.add(main, skip)
}

/// Local node embeddings: both layers applied to the snapshot features.
pub fn gcn_forward(
    tape: &mut Tape,
    adjacency: &Arc<SparseMatrix>,
    features: Var,
    params: &GcnParams<Var>,
    activation: Activation,
) -> Result<Var> {
    let mut h = features;
    for layer in &params.layers {
        h = gcn_layer(tape, adjacency, h, layer, activation)?;
    }
    Ok(h)
}
