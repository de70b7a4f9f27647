//! A snapshot sequence bundled with everything the encoders read from it.

use std::sync::Arc;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot};
use crate::walk::WalkCache;

/// Graph, per-snapshot normalized adjacency and the walk cache.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    graph: DynamicGraph,
    adjacency: Vec<Arc<SparseMatrix>>,
    cache: WalkCache,
}

/// What the forward pass needs from one snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotView<'a> {
    pub snapshot: &'a Snapshot,
    pub adjacency: Arc<SparseMatrix>,
    pub cache: &'a WalkCache,
}

impl PreparedGraph {
    pub fn new(graph: DynamicGraph, cache: WalkCache) -> Result<Self> {
        if cache.snapshot_count() != graph.len() || cache.node_count() != graph.node_count() {
            return Err(Error::Consistency(format!(
                "walk cache covers {} snapshots x {} nodes but the graph has {} x {}",
                cache.snapshot_count(),
                cache.node_count(),
                graph.len(),
                graph.node_count()
            )));
        }
        let adjacency = graph
            .snapshots()
            .iter()
            .map(|s| Arc::new(s.normalized_adjacency().matrix))
            .collect();
        Ok(PreparedGraph {
            graph,
            adjacency,
            cache,
        })
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn cache(&self) -> &WalkCache {
        &self.cache
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn view(&self, t: usize) -> SnapshotView<'_> {
        SnapshotView {
            snapshot: self.graph.snapshot(t),
            adjacency: Arc::clone(&self.adjacency[t]),
            cache: &self.cache,
        }
    }
}
