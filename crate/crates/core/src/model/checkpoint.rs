//! Plain-text tensor container with bit-exact `f64` storage.
//!
//! ```text
//! dygssm-checkpoint 1
//! meta <key> <value...>
//! tensor <name> <rows> <cols>
//! <hex bits> <hex bits> ...
//! ```
//! Every value is written as the 16-digit hex of its IEEE-754 bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "dygssm-checkpoint 1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, t) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", t.rows(), t.cols());
            let hex: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            out.push_str(&hex.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<checkpoint>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(bad(1, format!("missing {MAGIC:?} header"))),
        }
        let mut ck = Checkpoint::default();
        while let Some((no, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(bad(no, format!("malformed tensor header {line:?}")));
                };
                let dim = |s: &str| s.parse::<usize>().map_err(|e| bad(no, format!("bad dimension {s:?}: {e}")));
                let (rows, cols) = (dim(rows)?, dim(cols)?);
                let (dno, data_line) = lines
                    .next()
                    .ok_or_else(|| bad(no, format!("tensor {name} has no data line")))?;
                let data = data_line
                    .split_whitespace()
                    .map(|h| {
                        u64::from_str_radix(h, 16)
                            .map(f64::from_bits)
                            .map_err(|e| bad(dno, format!("bad value {h:?}: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let t = Tensor::from_vec(rows, cols, data).map_err(|e| bad(dno, e.to_string()))?;
                ck.tensors.push((name.to_string(), t));
            } else {
                return Err(bad(no, format!("unexpected line {line:?}")));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.into(),
                line,
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awkward_values_survive() {
        let t = Tensor::from_rows(&[[0.1, -0.0, f64::MIN_POSITIVE], [1e308, -3.5e-300, f64::EPSILON]]);
        let mut ck = Checkpoint::default();
        ck.meta.insert("seed".into(), "42".into());
        ck.tensors.push(("a.b".into(), t.clone()));
        let back = Checkpoint::parse(&ck.render()).unwrap();
        assert_eq!(back.meta["seed"], "42");
        let got = back.tensor("a.b").unwrap();
        for (x, y) in got.data().iter().zip(t.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_missing_header_and_truncation() {
        assert!(Checkpoint::parse("tensor x 1 1\n0\n").is_err());
        assert!(Checkpoint::parse("dygssm-checkpoint 1\ntensor x 1 2\n3ff0000000000000\n").is_err());
        assert!(Checkpoint::parse("dygssm-checkpoint 1\ntensor x 1 1\n").is_err());
    }
}
