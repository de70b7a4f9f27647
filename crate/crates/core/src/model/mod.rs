//! The forward computation: local GCN encoder, global walk+GRU encoder,
//! cross-attention fusion and dot-product edge scoring.

mod attention;
mod checkpoint;
mod gcn;
mod gru;
mod loss;
mod params;

use serde::{Deserialize, Serialize};

pub use attention::cross_attention;
pub use checkpoint::Checkpoint;
pub use gcn::{gcn_forward, gcn_layer, Activation};
pub use gru::{encode_global, gru_forward, gru_layer};
pub use loss::{bce_loss, pair_probabilities, score_edge, BCE_EPS};
pub use params::{
    glorot, gru_param_count, init_params, AttnParams, GcnLayer, GcnParams, GruLayer, GruParams,
    GruVariant, ModelParams, ParamGroup,
};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::prepared::{PreparedGraph, SnapshotView};
use crate::rng;

/// How node features `X_t` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Trainable table shared by all snapshots (part of the GCN group).
    Embedding,
    /// Fixed identity features; width equals the node count.
    OneHot,
    /// Fixed `ln(1 + degree)` column, recomputed per snapshot.
    Degree,
}

/// Shapes and switches that determine the parameter layout and the forward
/// wiring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_count: usize,
    pub features: FeatureKind,
    /// Width of the embedding table; ignored for fixed features.
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub gru: GruVariant,
    pub activation: Activation,
    pub use_global: bool,
    /// Without cross-attention, fused = local + global.
    pub use_cross_attention: bool,
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        match self.features {
            FeatureKind::Embedding => self.feature_dim,
            FeatureKind::OneHot => self.node_count,
            FeatureKind::Degree => 1,
        }
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut r = rng::stream(seed, &[rng::purpose::INIT]);
        let rows = (self.features == FeatureKind::Embedding).then_some(self.node_count);
        init_params(self.input_dim(), self.hidden_dim, rows, self.gru, &mut r)
    }

    /// Node features for one snapshot.
    pub fn features(&self, tape: &mut Tape, params: &ModelParams<Var>, view: &SnapshotView<'_>) -> Result<Var> {
        match self.features {
            FeatureKind::Embedding => params
                .gcn
                .embedding
                .ok_or_else(|| Error::Consistency("embedding features need an embedding table".into())),
            FeatureKind::OneHot => Ok(tape.constant(Tensor::identity(self.node_count))),
            FeatureKind::Degree => {
                let s = view.snapshot;
                Ok(tape.constant(Tensor::from_fn(self.node_count, 1, |u, _| {
                    (s.degree(u) as f64).ln_1p()
                })))
            }
        }
    }
}

/// Per-snapshot node embeddings. `global` is absent when the global view
/// is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<T> {
    pub local: T,
    pub global: Option<T>,
    pub fused: T,
}

/// Puts every parameter on `tape`; groups for which `trainable` is false
/// become constants.
pub fn bind(
    tape: &mut Tape,
    params: &ModelParams,
    trainable: impl Fn(ParamGroup) -> bool,
) -> ModelParams<Var> {
    params
        .try_map(|_, group, t| {
            Ok(if trainable(group) {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            })
        })
        .expect("binding cannot fail")
}

/// Global embeddings only (the input of the global loss).
pub fn global_embeddings(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &ModelParams<Var>,
    view: &SnapshotView<'_>,
) -> Result<Var> {
    let x = cfg.features(tape, params, view)?;
    encode_global(tape, view.snapshot, view.cache, x, &params.gru)
}

/// Local, global and fused embeddings of one snapshot.
pub fn forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &ModelParams<Var>,
    view: &SnapshotView<'_>,
) -> Result<Embeddings<Var>> {
    let x = cfg.features(tape, params, view)?;
    let local = gcn_forward(tape, &view.adjacency, x, &params.gcn, cfg.activation)?;
    if !cfg.use_global {
        return Ok(Embeddings {
            local,
            global: None,
            fused: local,
        });
    }
    let global = encode_global(tape, view.snapshot, view.cache, x, &params.gru)?;
    let fused = if cfg.use_cross_attention {
        cross_attention(tape, local, global, &params.attn)?.0
    } else {
        tape.add(local, global)?
    };
    Ok(Embeddings {
        local,
        global: Some(global),
        fused,
    })
}

/// A configured model with concrete parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let params = config.init_params(seed);
        Model { config, params }
    }

    /// Embeddings of snapshot `t` without recording gradients.
    pub fn embeddings(&self, data: &PreparedGraph, t: usize) -> Result<Embeddings<Tensor>> {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &self.params, |_| false);
        let e = forward(&mut tape, &self.config, &bound, &data.view(t))?;
        Ok(Embeddings {
            local: tape.value(e.local).clone(),
            global: e.global.map(|g| tape.value(g).clone()),
            fused: tape.value(e.fused).clone(),
        })
    }

    /// Parameters as named tensors with the model configuration in the
    /// metadata.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert(
            "model".into(),
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        self.params
            .visit(&mut |name, _, t| ck.tensors.push((name.to_string(), t.clone())));
        ck
    }

    /// Rebuilds a model from a checkpoint. Tensors with a `ssm.` prefix
    /// are ignored. When `expected` is given, the stored configuration must
    /// match it.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&ModelConfig>) -> Result<Self> {
        let raw = ck
            .meta
            .get("model")
            .ok_or_else(|| Error::Consistency("checkpoint has no model configuration".into()))?;
        let config: ModelConfig = serde_json::from_str(raw)
            .map_err(|e| Error::Consistency(format!("checkpoint model configuration: {e}")))?;
        if let Some(want) = expected {
            if want != &config {
                return Err(Error::Consistency(format!(
                    "checkpoint incompatible with configuration: stored {config:?}, requested {want:?}"
                )));
            }
        }
        let mut params = config.init_params(0);
        let named: Vec<(String, Tensor)> = ck
            .tensors
            .iter()
            .filter(|(n, _)| !n.starts_with("ssm."))
            .cloned()
            .collect();
        params.assign_from(&named)?;
        Ok(Model { config, params })
    }

    /// Scorer for edges of snapshot `t + 1` built from the fused embeddings
    /// of snapshot `t`.
    pub fn predict_next(&self, data: &PreparedGraph, t: usize) -> Result<EdgeScorer> {
        Ok(EdgeScorer {
            embeddings: self.embeddings(data, t)?.fused,
        })
    }
}

/// Dot-product link scorer over fixed node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScorer {
    pub embeddings: Tensor,
}

impl EdgeScorer {
    pub fn score(&self, u: usize, v: usize) -> f64 {
        score_edge(self.embeddings.row(u), self.embeddings.row(v))
    }
}
