//! Dynamic-graph link prediction with a local GCN view, a global
//! random-walk/GRU view, cross-attention fusion and HiPPO state-space
//! gradient updates across snapshots.
//!
//! The usual flow:
//!
//! 1. build a [`DynamicGraph`] from timestamped edges
//!    ([`partition_snapshots`]) or the [`synthetic`] generator;
//! 2. precompute walk summaries with [`build_cache`] and bundle both into a
//!    [`PreparedGraph`];
//! 3. [`train`] with a [`RunConfig`];
//! 4. [`evaluate`] the returned [`Model`] on the test snapshots.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod optim;
pub mod prepared;
pub mod rng;
pub mod ssm;
pub mod synthetic;
pub mod trainer;
pub mod walk;

pub use autodiff::{Tape, Tensor, Var};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, MetricsReport};
pub use graph::{partition_snapshots, DynamicGraph, Snapshot, TemporalEdge};
pub use model::{Model, ModelConfig, ModelParams};
pub use prepared::PreparedGraph;
pub use ssm::{SsmMode, SsmState};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use trainer::{train, Split, TrainOutcome};
pub use walk::{build_cache, WalkCache, WalkConfig};
