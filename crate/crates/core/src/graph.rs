//! Snapshot graphs: time binning, normalized adjacency, negative sampling.

use rand::seq::index;
use rand::Rng;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};

/// One timestamped interaction between two dense node ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalEdge {
    pub source: usize,
    pub target: usize,
    pub timestamp: f64,
}

impl TemporalEdge {
    pub fn new(source: usize, target: usize, timestamp: f64) -> Self {
        TemporalEdge {
            source,
            target,
            timestamp,
        }
    }
}

/// A static graph for one time bin.
///
/// Edges keep their original direction for bookkeeping, but the adjacency is
/// symmetric with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    index: usize,
    nodes: Vec<usize>,
    active: Vec<bool>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Snapshot {
    /// `active_nodes` must contain every edge endpoint; ids must be below
    /// `node_count`.
    pub fn new(
        index: usize,
        node_count: usize,
        edges: Vec<(usize, usize)>,
        active_nodes: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut active = vec![false; node_count];
        for n in active_nodes {
            if n >= node_count {
                return Err(Error::Input(format!(
                    "node {n} outside a universe of {node_count} nodes"
                )));
            }
            active[n] = true;
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(Error::Input(format!(
                    "edge ({u}, {v}) outside a universe of {node_count} nodes"
                )));
            }
            if !active[u] || !active[v] {
                return Err(Error::Invariant(format!(
                    "edge ({u}, {v}) in snapshot {index} has an inactive endpoint"
                )));
            }
            if u != v {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let nodes = (0..node_count).filter(|&n| active[n]).collect();
        Ok(Snapshot {
            index,
            nodes,
            active,
            edges,
            neighbors,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Nodes active in this snapshot, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.active.get(node).copied().unwrap_or(false)
    }

    /// Raw edges as assigned to this bin, duplicates and direction included.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Distinct undirected pairs without self-loops, each kept in the
    /// direction of its first occurrence.
    pub fn positive_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = std::collections::HashSet::new();
        self.edges
            .iter()
            .copied()
            .filter(|&(u, v)| u != v && seen.insert((u.min(v), u.max(v))))
            .collect()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Symmetric 0/1 adjacency matrix.
    pub fn adjacency(&self) -> SparseMatrix {
        let triplets: Vec<_> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&v| (u, v, 1.0)))
            .collect();
        let n = self.node_count();
        SparseMatrix::from_triplets(n, n, &triplets).expect("ids checked at construction")
    }

    pub fn normalized_adjacency(&self) -> NormalizedAdjacency {
        NormalizedAdjacency::from_adjacency(&self.adjacency())
            .expect("snapshot adjacency is symmetric by construction")
    }
}

/// An ordered run of snapshots over a shared node universe.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    snapshots: Vec<Snapshot>,
    node_count: usize,
}

impl DynamicGraph {
    pub fn new(snapshots: Vec<Snapshot>, node_count: usize) -> Result<Self> {
        for (i, s) in snapshots.iter().enumerate() {
            if s.index() != i {
                return Err(Error::Invariant(format!(
                    "snapshot at position {i} carries index {}",
                    s.index()
                )));
            }
            if s.node_count() != node_count {
                return Err(Error::Invariant(format!(
                    "snapshot {i} has {} nodes, graph universe has {node_count}",
                    s.node_count()
                )));
            }
        }
        Ok(DynamicGraph {
            snapshots,
            node_count,
        })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t]
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.snapshots.iter().map(|s| s.edges().len()).sum()
    }
}

/// Bins timestamped edges into `count` equal-width snapshots over
/// `[min_ts, max_ts]`; the last bin is closed on the right.
///
/// With `cumulative` set, snapshot `t` also carries every edge from earlier
/// bins. Active nodes accumulate over time either way.
pub fn partition_snapshots(
    edges: &[TemporalEdge],
    count: usize,
    cumulative: bool,
) -> Result<DynamicGraph> {
    if edges.is_empty() {
        return Err(Error::Input("edge list is empty".into()));
    }
    if count < 2 {
        return Err(Error::Config(format!("need at least 2 snapshots, got {count}")));
    }
    if let Some(e) = edges.iter().find(|e| !e.timestamp.is_finite()) {
        return Err(Error::Input(format!("non-finite timestamp {}", e.timestamp)));
    }
    let min = edges.iter().map(|e| e.timestamp).fold(f64::INFINITY, f64::min);
    let max = edges.iter().map(|e| e.timestamp).fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::Config(format!(
            "all timestamps equal {min}; cannot bin a degenerate time range"
        )));
    }
    let node_count = edges.iter().map(|e| e.source.max(e.target)).max().unwrap_or(0) + 1;
    let width = (max - min) / count as f64;

    let mut bins: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
    for e in edges {
        let b = (((e.timestamp - min) / width).floor() as usize).min(count - 1);
        bins[b].push((e.source, e.target));
    }

    let mut snapshots = Vec::with_capacity(count);
    let mut active = vec![false; node_count];
    let mut history: Vec<(usize, usize)> = Vec::new();
    for (t, bin) in bins.into_iter().enumerate() {
        for &(u, v) in &bin {
            active[u] = true;
            active[v] = true;
        }
        let snapshot_edges = if cumulative {
            history.extend_from_slice(&bin);
            history.clone()
        } else {
            bin
        };
        let nodes = (0..node_count).filter(|&n| active[n]);
        snapshots.push(Snapshot::new(t, node_count, snapshot_edges, nodes)?);
    }
    DynamicGraph::new(snapshots, node_count)
}

/// `D^{-1/2} A D^{-1/2}` with the inverse square root of a zero degree
/// taken as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: SparseMatrix,
    pub degree: Vec<usize>,
}

impl NormalizedAdjacency {
    /// `adjacency` must be square, symmetric, 0/1 and have a zero diagonal.
    pub fn from_adjacency(adjacency: &SparseMatrix) -> Result<Self> {
        let (n, m) = adjacency.shape();
        if n != m {
            return Err(Error::Invariant(format!("adjacency is {n}x{m}, not square")));
        }
        for r in 0..n {
            for (c, v) in adjacency.row(r) {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Invariant(format!("adjacency entry ({r}, {c}) = {v} is not 0/1")));
                }
                if r == c && v != 0.0 {
                    return Err(Error::Invariant(format!("adjacency has a self-loop at {r}")));
                }
            }
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Invariant("adjacency is not symmetric".into()));
        }
        let degree: Vec<usize> = (0..n)
            .map(|r| adjacency.row(r).filter(|&(_, v)| v != 0.0).count())
            .collect();
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        let triplets: Vec<_> = (0..n)
            .flat_map(|r| {
                let inv_sqrt = &inv_sqrt;
                adjacency
                    .row(r)
                    .filter(|&(_, v)| v != 0.0)
                    .map(move |(c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
            })
            .collect();
        Ok(NormalizedAdjacency {
            matrix: SparseMatrix::from_triplets(n, n, &triplets)?,
            degree,
        })
    }
}

/// Draws `k` nodes `v` with `v ≠ u` and `(u, v)` not an edge of `snapshot`,
/// uniformly from the snapshot's active nodes.
///
/// Draws are distinct when at least `k` candidates exist and fall back to
/// sampling with replacement otherwise. No candidates at all is an error.
pub fn negative_sample<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    u: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !snapshot.is_active(u) {
        return Err(Error::Input(format!(
            "node {u} is not part of snapshot {}",
            snapshot.index()
        )));
    }
    let eligible: Vec<usize> = snapshot
        .nodes()
        .iter()
        .copied()
        .filter(|&v| v != u && !snapshot.has_edge(u, v))
        .collect();
    if eligible.is_empty() {
        return Err(Error::Input(format!(
            "no eligible negatives for node {u} in snapshot {}",
            snapshot.index()
        )));
    }
    if eligible.len() >= k {
        Ok(index::sample(rng, eligible.len(), k)
            .into_iter()
            .map(|i| eligible[i])
            .collect())
    } else {
        Ok((0..k).map(|_| eligible[rng.gen_range(0..eligible.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot(n: usize, edges: &[(usize, usize)]) -> Snapshot {
        Snapshot::new(0, n, edges.to_vec(), 0..n).unwrap()
    }

    #[test]
    fn equal_width_bins() {
        let edges: Vec<_> = (1..=10)
            .map(|ts| TemporalEdge::new(ts % 3, 3 + ts % 2, ts as f64))
            .collect();
        let g = partition_snapshots(&edges, 2, false).unwrap();
        assert_eq!(g.len(), 2);
        // [1, 5.5) and [5.5, 10]
        assert_eq!(g.snapshot(0).edges().len(), 5);
        assert_eq!(g.snapshot(1).edges().len(), 5);
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn degenerate_time_range() {
        let err = partition_snapshots(&[TemporalEdge::new(0, 1, 5.0)], 2, false).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(partition_snapshots(&[], 3, false), Err(Error::Input(_))));
        let e = [TemporalEdge::new(0, 1, 0.0), TemporalEdge::new(1, 2, 1.0)];
        assert!(matches!(partition_snapshots(&e, 1, false), Err(Error::Config(_))));
    }

    #[test]
    fn cumulative_mode_keeps_history() {
        let e = [
            TemporalEdge::new(0, 1, 0.0),
            TemporalEdge::new(1, 2, 1.0),
            TemporalEdge::new(2, 3, 2.0),
        ];
        let g = partition_snapshots(&e, 3, true).unwrap();
        assert_eq!(g.snapshot(2).edges().len(), 3);
        assert!(g.snapshot(2).has_edge(0, 1));
        let g = partition_snapshots(&e, 3, false).unwrap();
        assert!(!g.snapshot(2).has_edge(0, 1));
        // nodes stay active once seen
        assert!(g.snapshot(2).is_active(0));
    }

    #[test]
    fn normalized_single_edge() {
        let s = snapshot(2, &[(0, 1)]);
        let norm = s.normalized_adjacency();
        assert_eq!(norm.matrix.to_dense(), s.adjacency().to_dense());
    }

    #[test]
    fn normalized_triangle_with_isolated_node() {
        let s = snapshot(4, &[(0, 1), (1, 2), (2, 0)]);
        let norm = s.normalized_adjacency().matrix.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert!((norm.get(i, j) - expect).abs() < 1e-15);
            }
        }
        for k in 0..4 {
            assert_eq!(norm.get(3, k), 0.0);
            assert_eq!(norm.get(k, 3), 0.0);
        }
    }

    #[test]
    fn asymmetric_adjacency_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(
            NormalizedAdjacency::from_adjacency(&a),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn star_center_has_no_negatives() {
        let s = snapshot(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(negative_sample(&s, 0, 3, &mut rng), Err(Error::Input(_))));
    }

    #[test]
    fn thousand_distinct_negatives() {
        let s = snapshot(1002, &[(0, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut neg = negative_sample(&s, 0, 1000, &mut rng).unwrap();
        neg.sort_unstable();
        neg.dedup();
        assert_eq!(neg.len(), 1000);
        assert!(!neg.contains(&0) && !neg.contains(&1));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let s = snapshot(30, &[(0, 1), (0, 2)]);
        let a = negative_sample(&s, 0, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = negative_sample(&s, 0, 10, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_candidates_sample_with_replacement() {
        let s = snapshot(4, &[(0, 1)]);
        let neg = negative_sample(&s, 0, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(neg.len(), 5);
        assert!(neg.iter().all(|&v| v == 2 || v == 3));
    }

    #[test]
    fn unknown_node_rejected() {
        let s = Snapshot::new(0, 4, vec![(0, 1)], [0, 1]).unwrap();
        assert!(matches!(
            negative_sample(&s, 3, 1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn positive_pairs_dedupe_undirected() {
        let s = snapshot(3, &[(0, 1), (1, 0), (1, 1), (2, 1)]);
        assert_eq!(s.positive_pairs(), vec![(0, 1), (2, 1)]);
    }
}
