//! Run configuration: a flat `key = value` file (TOML syntax) with every
//! key optional. The resolved copy written next to outputs lists all keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, FeatureKind, GruVariant, ModelConfig};
use crate::optim::AdamConfig;
use crate::ssm::SsmMode;
use crate::synthetic::SyntheticSpec;
use crate::walk::WalkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Edge list (`source,target,timestamp[,weight]`). Empty means the
    /// synthetic generator is used.
    pub data: Option<PathBuf>,
    /// Number of time bins for an edge list.
    pub snapshots: usize,
    /// Each snapshot holds all edges up to its bin instead of its bin only.
    pub cumulative: bool,

    pub synth_nodes: usize,
    pub synth_snapshots: usize,
    pub synth_planted: usize,
    pub synth_period: usize,
    pub synth_persistence: usize,
    pub synth_noise: f64,

    pub walk_p: f64,
    pub walk_q: f64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub top_k: usize,

    pub features: FeatureKind,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,

    pub train_fraction: f64,
    pub delta_t: usize,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Inner step size.
    pub eta: f64,
    /// `ε` of the dynamic weight `1/(loss + ε)`.
    pub weight_eps: f64,
    pub ssm_block: usize,
    pub ssm_mode: SsmMode,
    pub ssm_state_persist: bool,

    pub no_ssm: bool,
    pub no_global: bool,
    pub no_cross_attention: bool,
    pub random_window: bool,
    pub light_gru: bool,

    /// Negatives per source for validation during training.
    pub val_k_neg: usize,
    /// Negatives per source for the final evaluation.
    pub k_neg: usize,

    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticSpec::acceptance();
        let walk = WalkConfig::default();
        let adam = AdamConfig::default();
        RunConfig {
            data: None,
            snapshots: 20,
            cumulative: false,
            synth_nodes: synth.nodes,
            synth_snapshots: synth.snapshots,
            synth_planted: synth.planted,
            synth_period: synth.period,
            synth_persistence: synth.persistence,
            synth_noise: synth.noise,
            walk_p: walk.p,
            walk_q: walk.q,
            walks_per_node: walk.walks_per_node,
            walk_length: walk.walk_length,
            top_k: walk.top_k,
            features: FeatureKind::Embedding,
            feature_dim: 64,
            hidden_dim: 64,
            activation: Activation::Relu,
            train_fraction: 0.7,
            delta_t: 8,
            epochs: 100,
            patience: 10,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            eta: 0.1,
            weight_eps: crate::ssm::WEIGHT_EPS,
            ssm_block: 64,
            ssm_mode: SsmMode::Descent,
            ssm_state_persist: false,
            no_ssm: false,
            no_global: false,
            no_cross_attention: false,
            random_window: false,
            light_gru: false,
            val_k_neg: 50,
            k_neg: 1000,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Loads `path` (or the defaults) and applies `key=value` overrides.
    /// Values are TOML literals; anything that does not parse as one is
    /// taken as a string.
    pub fn with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        let mut problems = Vec::new();
        for o in overrides {
            let Some((key, raw)) = o.split_once('=') else {
                problems.push(format!("override {o:?} is not key=value"));
                continue;
            };
            let (key, raw) = (key.trim(), raw.trim());
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        if !problems.is_empty() {
            return Err(Error::ConfigList(problems));
        }
        toml::Table::try_into(table).map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    /// Every key with its effective value.
    pub fn to_toml(&self) -> String {
        let mut out = toml::to_string(self).expect("config serializes");
        if self.data.is_none() {
            out.insert_str(0, "# data = \"edges.csv\"\n");
        }
        out
    }

    /// Applies implied settings: without the global view there is nothing
    /// to cross-attend to.
    pub fn resolved(mut self) -> Self {
        if self.no_global {
            self.no_cross_attention = true;
        }
        self
    }

    /// Checks every key and reports all problems together.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if let Some(path) = &self.data {
            if !path.exists() {
                p.push(format!("data file {} does not exist", path.display()));
            }
            if self.snapshots < 2 {
                p.push(format!("snapshots must be >= 2, got {}", self.snapshots));
            }
        } else if let Err(Error::ConfigList(s)) = self.synthetic_spec().validate() {
            p.extend(s);
        }
        if let Err(Error::ConfigList(w)) = self.walk_config().validate() {
            p.extend(w);
        }
        if self.features == FeatureKind::Embedding && self.feature_dim == 0 {
            p.push("feature_dim must be >= 1".into());
        }
        if self.hidden_dim == 0 {
            p.push("hidden_dim must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            p.push(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.delta_t == 0 {
            p.push("delta_t must be >= 1".into());
        }
        let total = self.snapshot_count();
        let train = train_snapshots(total, self.train_fraction);
        if self.delta_t >= train && train > 0 {
            p.push(format!(
                "delta_t = {} must be smaller than the {train} training snapshots",
                self.delta_t
            ));
        }
        if train < 2 || train >= total {
            p.push(format!(
                "a {}/{} split of {total} snapshots leaves no room for training and testing",
                train,
                total.saturating_sub(train)
            ));
        }
        if self.epochs == 0 || self.epochs > 100 {
            p.push(format!("epochs must lie in 1..=100, got {}", self.epochs));
        }
        if self.patience == 0 {
            p.push("patience must be >= 1".into());
        }
        for (name, v) in [("lr", self.lr), ("eta", self.eta), ("adam_eps", self.adam_eps), ("weight_eps", self.weight_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name} must be a positive number, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                p.push(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.ssm_block == 0 {
            p.push("ssm_block must be >= 1".into());
        }
        if self.val_k_neg == 0 || self.k_neg == 0 {
            p.push("val_k_neg and k_neg must be >= 1".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(p))
        }
    }

    pub fn snapshot_count(&self) -> usize {
        if self.data.is_some() {
            self.snapshots
        } else {
            self.synth_snapshots
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            nodes: self.synth_nodes,
            snapshots: self.synth_snapshots,
            planted: self.synth_planted,
            period: self.synth_period,
            persistence: self.synth_persistence,
            noise: self.synth_noise,
        }
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            p: self.walk_p,
            q: self.walk_q,
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            top_k: self.top_k,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn model_config(&self, node_count: usize) -> ModelConfig {
        ModelConfig {
            node_count,
            features: self.features,
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            gru: if self.light_gru {
                GruVariant::Light
            } else {
                GruVariant::Full
            },
            activation: self.activation,
            use_global: !self.no_global,
            use_cross_attention: !self.no_global && !self.no_cross_attention,
        }
    }
}

/// `⌊fraction · total⌋`, robust to representation error (0.7 · 10 = 7).
pub fn train_snapshots(total: usize, fraction: f64) -> usize {
    ((total as f64) * fraction + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_apply_typed_and_string_values() {
        let c = RunConfig::with_overrides(
            None,
            &["delta_t=4".into(), "ssm_mode=verbatim".into(), "eta = 0.25".into(), "no_ssm=true".into()],
        )
        .unwrap();
        assert_eq!(c.delta_t, 4);
        assert_eq!(c.ssm_mode, SsmMode::Verbatim);
        assert_eq!(c.eta, 0.25);
        assert!(c.no_ssm);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("delta = 3"), Err(Error::Config(_))));
        assert!(RunConfig::with_overrides(None, &["bogus=1".into()]).is_err());
    }

    #[test]
    fn all_problems_reported_together() {
        let c = RunConfig {
            delta_t: 0,
            epochs: 0,
            lr: -1.0,
            ssm_block: 0,
            ..RunConfig::default()
        };
        match c.validate() {
            Err(Error::ConfigList(p)) => assert_eq!(p.len(), 4, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delta_t_must_fit_training_split() {
        // 20 snapshots → 14 training snapshots
        let c = RunConfig {
            delta_t: 14,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            delta_t: 13,
            ..RunConfig::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn no_global_disables_cross_attention() {
        let c = RunConfig {
            no_global: true,
            ..RunConfig::default()
        }
        .resolved();
        assert!(c.no_cross_attention);
        let m = c.model_config(5);
        assert!(!m.use_global && !m.use_cross_attention);
    }

    #[test]
    fn split_is_exact_floor() {
        assert_eq!(train_snapshots(10, 0.7), 7);
        assert_eq!(train_snapshots(20, 0.7), 14);
        assert_eq!(train_snapshots(262, 0.7), 183);
    }
}
