//! Synthetic dynamic graphs with a planted recurring edge pattern.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot, TemporalEdge};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub snapshots: usize,
    /// Number of distinct planted pairs.
    pub planted: usize,
    /// Planted edges are present at `t` when `t mod period < persistence`.
    pub period: usize,
    pub persistence: usize,
    /// Per-pair, per-snapshot probability of an extra uniform edge.
    pub noise: f64,
}

impl SyntheticSpec {
    /// The desk-scale learning task: 60 nodes, 20 snapshots, 40 planted
    /// pairs, noise 0.002.
    pub fn acceptance() -> Self {
        SyntheticSpec {
            nodes: 60,
            snapshots: 20,
            planted: 40,
            period: 4,
            persistence: 3,
            noise: 0.002,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.nodes < 2 {
            problems.push(format!("synthetic graph needs >= 2 nodes, got {}", self.nodes));
        }
        if self.snapshots < 1 {
            problems.push("synthetic graph needs >= 1 snapshot".to_string());
        }
        let pairs = self.nodes * self.nodes.saturating_sub(1) / 2;
        if self.planted > pairs {
            problems.push(format!("{} planted edges exceed the {pairs} node pairs", self.planted));
        }
        if self.period < 1 {
            problems.push("period must be >= 1".to_string());
        }
        if self.persistence < 1 || self.persistence > self.period {
            problems.push(format!(
                "persistence must lie in 1..={}, got {}",
                self.period, self.persistence
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            problems.push(format!("noise must lie in [0, 1], got {}", self.noise));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(problems))
        }
    }

    pub fn planted_active(&self, t: usize) -> bool {
        t % self.period < self.persistence
    }
}

/// A generated graph together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub spec: SyntheticSpec,
    pub graph: DynamicGraph,
    /// Planted pairs `(u, v)` with `u < v`.
    pub planted: Vec<(usize, usize)>,
}

impl SyntheticGraph {
    /// Edges as timestamped interactions (timestamp = snapshot index).
    pub fn temporal_edges(&self) -> Vec<TemporalEdge> {
        self.graph
            .snapshots()
            .iter()
            .flat_map(|s| {
                s.edges()
                    .iter()
                    .map(move |&(u, v)| TemporalEdge::new(u, v, s.index() as f64))
            })
            .collect()
    }
}

fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
    for u in 0..n {
        let row = n - u - 1;
        if k < row {
            return (u, u + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Every node is active in every snapshot.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticGraph> {
    spec.validate()?;
    let n = spec.nodes;
    let pairs = n * (n - 1) / 2;
    let mut r = rng::stream(seed, &[rng::purpose::SYNTHETIC]);
    let mut planted: Vec<(usize, usize)> = index::sample(&mut r, pairs, spec.planted)
        .into_iter()
        .map(|k| pair_from_index(n, k))
        .collect();
    planted.sort_unstable();
    let mut snapshots = Vec::with_capacity(spec.snapshots);
    for t in 0..spec.snapshots {
        let mut r = rng::stream(seed, &[rng::purpose::SYNTHETIC, t as u64 + 1]);
        let on = spec.planted_active(t);
        let mut edges: Vec<(usize, usize)> = if on { planted.clone() } else { Vec::new() };
        if spec.noise > 0.0 {
            for k in 0..pairs {
                let e = pair_from_index(n, k);
                if r.gen_bool(spec.noise) && !(on && planted.binary_search(&e).is_ok()) {
                    edges.push(e);
                }
            }
        }
        snapshots.push(Snapshot::new(t, n, edges, 0..n)?);
    }
    Ok(SyntheticGraph {
        spec: spec.clone(),
        graph: DynamicGraph::new(snapshots, n)?,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_indexing_covers_upper_triangle() {
        let n = 6;
        let all: Vec<_> = (0..n * (n - 1) / 2).map(|k| pair_from_index(n, k)).collect();
        let mut expect = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                expect.push((u, v));
            }
        }
        assert_eq!(all, expect);
    }

    #[test]
    fn noiseless_graph_is_the_schedule() {
        let spec = SyntheticSpec {
            noise: 0.0,
            period: 4,
            persistence: 2,
            ..SyntheticSpec::acceptance()
        };
        let g = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(g.planted.len(), 40);
        for s in g.graph.snapshots() {
            let expect = if s.index() % 4 < 2 { g.planted.clone() } else { vec![] };
            assert_eq!(s.edges(), &expect[..]);
        }
    }

    #[test]
    fn period_one_keeps_planted_edges_everywhere() {
        let spec = SyntheticSpec {
            period: 1,
            persistence: 1,
            ..SyntheticSpec::acceptance()
        };
        let g = generate_synthetic(&spec, 5).unwrap();
        for s in g.graph.snapshots() {
            for &(u, v) in &g.planted {
                assert!(s.has_edge(u, v));
            }
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let spec = SyntheticSpec::acceptance();
        let a = generate_synthetic(&spec, 11).unwrap();
        let b = generate_synthetic(&spec, 11).unwrap();
        assert_eq!(a.graph, b.graph);
        let c = generate_synthetic(&spec, 12).unwrap();
        assert_ne!(a.planted, c.planted);
    }

    #[test]
    fn invalid_specs_list_every_problem() {
        let spec = SyntheticSpec {
            nodes: 3,
            planted: 10,
            period: 0,
            noise: 2.0,
            ..SyntheticSpec::acceptance()
        };
        match spec.validate() {
            Err(Error::ConfigList(p)) => assert_eq!(p.len(), 4, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }
}
