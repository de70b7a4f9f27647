//! Edge-list ingestion and the on-disk layout of prepared data.
//!
//! A prepared directory holds:
//! ```text
//! manifest.json            node/edge/snapshot counts and walk settings
//! nodes.csv                original_id,index
//! active.csv               snapshot,node
//! snapshots/snapshot_NNNN.csv   source,target
//! walk_cache.csv           snapshot,source,n1..nk
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot, TemporalEdge};
use crate::prepared::PreparedGraph;
use crate::walk::{WalkCache, WalkConfig};

/// Edges with dense node ids and the original id of each index.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<TemporalEdge>,
    pub node_ids: Vec<String>,
}

fn delimiter_for(path: &Path, first_line: &str) -> u8 {
    let tsv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    if tsv || (first_line.contains('\t') && !first_line.contains(',')) {
        b'\t'
    } else {
        b','
    }
}

/// Reads `source,target,timestamp[,weight]` rows (comma or tab separated).
/// A first row whose timestamp is not a number is taken as a header. Node
/// ids are mapped to `0..n` in order of first appearance.
pub fn read_edge_list(path: &Path) -> Result<EdgeList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<EdgeList> {
    let delimiter = delimiter_for(path, text.lines().next().unwrap_or(""));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut edges = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let bad = |line: usize, message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let record = record.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() < 3 || record.len() > 4 {
            return Err(bad(line, format!("expected 3 or 4 columns, got {}", record.len())));
        }
        let timestamp = match record[2].parse::<f64>() {
            Ok(ts) if ts.is_finite() => ts,
            Ok(ts) => return Err(bad(line, format!("non-finite timestamp {ts}"))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(bad(line, format!("bad timestamp {:?}: {e}", &record[2]))),
        };
        let mut id = |raw: &str| -> Result<usize> {
            if raw.is_empty() {
                return Err(bad(line, "empty node id".into()));
            }
            Ok(*index.entry(raw.to_string()).or_insert_with(|| {
                node_ids.push(raw.to_string());
                node_ids.len() - 1
            }))
        };
        let source = id(&record[0])?;
        let target = id(&record[1])?;
        edges.push(TemporalEdge::new(source, target, timestamp));
    }
    if edges.is_empty() {
        return Err(Error::Input(format!("{} contains no edges", path.display())));
    }
    Ok(EdgeList { edges, node_ids })
}

pub fn write_node_map(path: &Path, node_ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let io = |e| csv_io(path, e);
    w.write_record(["original_id", "index"]).map_err(io)?;
    for (i, id) in node_ids.iter().enumerate() {
        w.write_record([id.as_str(), &i.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_node_map(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut ids = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let index: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.into(),
                line: i + 2,
                message: "bad index column".into(),
            })?;
        if index != ids.len() {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 2,
                message: format!("expected index {}, got {index}", ids.len()),
            });
        }
        ids.push(rec[0].to_string());
    }
    Ok(ids)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

/// Counts and settings recorded with prepared data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub nodes: usize,
    pub edges: usize,
    pub snapshots: usize,
    pub cumulative: bool,
    pub walk: WalkConfig,
    pub seed: u64,
}

impl Manifest {
    /// One-line dataset summary, e.g. `5,881 nodes, 35,592 edges, 262 snapshots`.
    pub fn summary(&self) -> String {
        format!(
            "{} nodes, {} edges, {} snapshots",
            thousands(self.nodes),
            thousands(self.edges),
            thousands(self.snapshots)
        )
    }
}

/// `35592` → `35,592`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn snapshot_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("snapshots").join(format!("snapshot_{t:04}.csv"))
}

/// Writes graph, node map and walk cache under `dir`.
pub fn write_prepared(
    dir: &Path,
    graph: &DynamicGraph,
    node_ids: &[String],
    cache: &WalkCache,
    manifest: &Manifest,
) -> Result<()> {
    let snaps = dir.join("snapshots");
    std::fs::create_dir_all(&snaps).map_err(|e| Error::io(&snaps, e))?;
    write_node_map(&dir.join("nodes.csv"), node_ids)?;
    let mut active = String::from("snapshot,node\n");
    for s in graph.snapshots() {
        let mut out = String::from("source,target\n");
        for &(u, v) in s.edges() {
            let _ = writeln!(out, "{u},{v}");
        }
        write_file(&snapshot_path(dir, s.index()), &out)?;
        for &n in s.nodes() {
            let _ = writeln!(active, "{},{n}", s.index());
        }
    }
    write_file(&dir.join("active.csv"), &active)?;
    cache.save(&dir.join("walk_cache.csv"))?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), &json)
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let cell = |c: usize| {
            rec.get(c)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line: i + 2,
                    message: format!("column {} is not a node index", c + 1),
                })
        };
        out.push((cell(0)?, cell(1)?));
    }
    Ok(out)
}

/// Loads what [`write_prepared`] wrote.
pub fn load_prepared(dir: &Path) -> Result<(PreparedGraph, Manifest, Vec<String>)> {
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", mpath.display())))?;
    let node_ids = read_node_map(&dir.join("nodes.csv"))?;
    if node_ids.len() != manifest.nodes {
        return Err(Error::Consistency(format!(
            "node map has {} ids but the manifest says {}",
            node_ids.len(),
            manifest.nodes
        )));
    }
    let mut active = vec![Vec::new(); manifest.snapshots];
    for (t, n) in read_pairs(&dir.join("active.csv"))? {
        if t >= manifest.snapshots {
            return Err(Error::Consistency(format!("active.csv names snapshot {t}")));
        }
        active[t].push(n);
    }
    let mut snapshots = Vec::with_capacity(manifest.snapshots);
    for (t, nodes) in active.into_iter().enumerate() {
        let edges = read_pairs(&snapshot_path(dir, t))?;
        snapshots.push(Snapshot::new(t, manifest.nodes, edges, nodes)?);
    }
    let graph = DynamicGraph::new(snapshots, manifest.nodes)?;
    let cache = WalkCache::load(&dir.join("walk_cache.csv"), manifest.snapshots, manifest.nodes)?;
    Ok((PreparedGraph::new(graph, cache)?, manifest, node_ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_tabs_and_remapping() {
        let text = "src\tdst\tts\tw\nA\tB\t5\t1\nB\tC\t7\t-2\nA\tC\t9\t3\n";
        let el = parse_edge_list(text, Path::new("x.tsv")).unwrap();
        assert_eq!(el.node_ids, vec!["A", "B", "C"]);
        assert_eq!(el.edges[1], TemporalEdge::new(1, 2, 7.0));
        let el = parse_edge_list("10,20,1.5\n20,30,2\n", Path::new("x.csv")).unwrap();
        assert_eq!(el.node_ids, vec!["10", "20", "30"]);
        assert_eq!(el.edges.len(), 2);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = parse_edge_list("a,b,ts\n1,2,3\n1,2,x\n", Path::new("e.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let err = parse_edge_list("1,2\n", Path::new("e.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
        assert!(matches!(parse_edge_list("s,t,ts\n", Path::new("e.csv")), Err(Error::Input(_))));
    }

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(5881), "5,881");
        assert_eq!(thousands(35592), "35,592");
        assert_eq!(thousands(262), "262");
        assert_eq!(thousands(1_000_000), "1,000,000");
    }
}
