//! Second-order biased random walks and per-node walk summaries.
//!
//! For every node of every snapshot we run a batch of short biased walks,
//! count which nodes they visit, and keep the most frequent few. The
//! summaries are computed once before training and stored in a
//! [`WalkCache`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Return parameter: weight `1/p` for stepping back to the previous
    /// node. `f64::INFINITY` forbids backtracking.
    pub p: f64,
    /// In-out parameter: weight `1/q` for moving two hops away from the
    /// previous node.
    pub q: f64,
    pub walks_per_node: usize,
    /// Steps taken after the source.
    pub walk_length: usize,
    pub top_k: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 1.0,
            q: 2.0,
            walks_per_node: 50,
            walk_length: 5,
            top_k: 5,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.p > 0.0) {
            problems.push(format!("walk p must be > 0, got {}", self.p));
        }
        if !(self.q > 0.0) {
            problems.push(format!("walk q must be > 0, got {}", self.q));
        }
        if self.walks_per_node == 0 {
            problems.push("walks_per_node must be >= 1".to_string());
        }
        if self.walk_length == 0 {
            problems.push("walk_length must be >= 1".to_string());
        }
        if self.top_k == 0 {
            problems.push("top_k must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(problems))
        }
    }
}

/// Unnormalized weights for the next step from `current`, having arrived
/// from `previous`. The first step (no previous node) is uniform.
pub fn transition_weights(
    snapshot: &Snapshot,
    previous: Option<usize>,
    current: usize,
    cfg: &WalkConfig,
) -> Vec<(usize, f64)> {
    let neighbors = snapshot.neighbors(current);
    match previous {
        None => neighbors.iter().map(|&v| (v, 1.0)).collect(),
        Some(prev) => neighbors
            .iter()
            .map(|&v| {
                let w = if v == prev {
                    1.0 / cfg.p
                } else if snapshot.has_edge(v, prev) {
                    1.0
                } else {
                    1.0 / cfg.q
                };
                (v, w)
            })
            .collect(),
    }
}

/// One walk starting at `source`. The returned path begins with `source`
/// and has at most `walk_length` further nodes; it stops early at an
/// isolated source or when every continuation has zero weight.
pub fn biased_walk<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    source: usize,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(cfg.walk_length + 1);
    path.push(source);
    let mut previous = None;
    let mut current = source;
    for _ in 0..cfg.walk_length {
        let weights = transition_weights(snapshot, previous, current, cfg);
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut next = weights.last().expect("total > 0 implies a neighbor").0;
        for &(v, w) in &weights {
            if target < w {
                next = v;
                break;
            }
            target -= w;
        }
        previous = Some(current);
        current = next;
        path.push(next);
    }
    path
}

/// The `k` most frequent keys, ties broken by the smaller node id.
pub fn most_frequent(counts: &HashMap<usize, usize>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, usize)> = counts.iter().map(|(&n, &c)| (n, c)).collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(n, _)| n).collect()
}

/// Runs `walks_per_node` walks from `source` and returns the `top_k` most
/// visited nodes. Visits to the source itself are not counted.
pub fn walk_summary<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    source: usize,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Vec<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for _ in 0..cfg.walks_per_node {
        for &v in biased_walk(snapshot, source, cfg, rng).iter().skip(1) {
            if v != source {
                *counts.entry(v).or_default() += 1;
            }
        }
    }
    most_frequent(&counts, cfg.top_k)
}

/// Fixed-length GRU input: the summary followed by copies of the source.
pub fn padded_sequence(summary: &[usize], source: usize, len: usize) -> Vec<usize> {
    summary
        .iter()
        .copied()
        .chain(std::iter::repeat(source))
        .take(len)
        .collect()
}

/// Precomputed walk summaries for every node of every snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCache {
    top_k: usize,
    /// `summaries[t][node]`
    summaries: Vec<Vec<Vec<usize>>>,
}

impl WalkCache {
    pub fn new(top_k: usize, snapshots: usize, node_count: usize) -> Self {
        WalkCache {
            top_k,
            summaries: vec![vec![Vec::new(); node_count]; snapshots],
        }
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn snapshot_count(&self) -> usize {
        self.summaries.len()
    }

    pub fn node_count(&self) -> usize {
        self.summaries.first().map_or(0, Vec::len)
    }

    pub fn summary(&self, t: usize, node: usize) -> Option<&[usize]> {
        self.summaries.get(t)?.get(node).map(Vec::as_slice)
    }

    pub fn set(&mut self, t: usize, node: usize, summary: Vec<usize>) {
        self.summaries[t][node] = summary;
    }

    /// CSV interchange form: `snapshot,source,n1..nk`, one row per non-empty
    /// summary, blank cells for missing trailing entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snapshot,source");
        for i in 1..=self.top_k {
            let _ = write!(out, ",n{i}");
        }
        out.push('\n');
        for (t, per_node) in self.summaries.iter().enumerate() {
            for (node, summary) in per_node.iter().enumerate() {
                if summary.is_empty() {
                    continue;
                }
                let _ = write!(out, "{t},{node}");
                for i in 0..self.top_k {
                    match summary.get(i) {
                        Some(v) => {
                            let _ = write!(out, ",{v}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str, snapshots: usize, node_count: usize) -> Result<Self> {
        let path = Path::new("<walk cache>");
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("walk cache is empty".into()))?
            .1;
        let top_k = header.split(',').count().saturating_sub(2);
        if !header.starts_with("snapshot,source") || top_k == 0 {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("unexpected walk cache header {header:?}"),
            });
        }
        let mut cache = WalkCache::new(top_k, snapshots, node_count);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                message,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != top_k + 2 {
                return Err(bad(format!("expected {} cells, got {}", top_k + 2, cells.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| bad(format!("bad integer {s:?}: {e}")))
            };
            let t = parse(cells[0])?;
            let node = parse(cells[1])?;
            if t >= snapshots || node >= node_count {
                return Err(bad(format!(
                    "row ({t}, {node}) outside {snapshots} snapshots x {node_count} nodes"
                )));
            }
            let summary = cells[2..]
                .iter()
                .filter(|c| !c.trim().is_empty())
                .map(|c| parse(c))
                .collect::<Result<Vec<_>>>()?;
            if let Some(&v) = summary.iter().find(|&&v| v >= node_count) {
                return Err(bad(format!("summary node {v} outside the universe")));
            }
            cache.set(t, node, summary);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, snapshots: usize, node_count: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WalkCache::from_csv(&text, snapshots, node_count).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.into(),
                line,
                message,
            },
            other => other,
        })
    }
}

/// Summaries for every node of every snapshot. Each `(snapshot, node)` pair
/// draws from its own stream derived from `seed`, so the result does not
/// depend on thread scheduling.
pub fn build_cache(graph: &DynamicGraph, cfg: &WalkConfig, seed: u64) -> Result<WalkCache> {
    cfg.validate()?;
    let n = graph.node_count();
    let jobs: Vec<(usize, usize)> = graph
        .snapshots()
        .iter()
        .flat_map(|s| (0..n).filter(|&u| s.degree(u) > 0).map(move |u| (s.index(), u)))
        .collect();
    let results: Vec<(usize, usize, Vec<usize>)> = jobs
        .par_iter()
        .map(|&(t, u)| {
            let mut r = rng::stream(seed, &[rng::purpose::WALK, t as u64, u as u64]);
            (t, u, walk_summary(graph.snapshot(t), u, cfg, &mut r))
        })
        .collect();
    let mut cache = WalkCache::new(cfg.top_k, graph.len(), n);
    for (t, u, summary) in results {
        cache.set(t, u, summary);
    }
    Ok(cache)
}
