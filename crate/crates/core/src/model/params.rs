//! Named, grouped parameter sets.
//!
//! Every container is generic over its leaf type so the same structure can
//! hold plain values ([`Tensor`]), tape handles ([`Var`](crate::autodiff::Var))
//! or per-parameter optimizer state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// The three disjoint parameter groups. Each group is trained by its own
/// rule: GCN weights take the inner state-space update and the outer fused
/// loss, attention weights only the outer fused loss, GRU weights only the
/// outer global loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Gcn,
    Gru,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GruVariant {
    Full,
    /// No reset gate, no candidate nonlinearity, no recurrent input.
    Light,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer<T> {
    pub w: T,
    pub o: T,
    pub o_bias: T,
    pub j: T,
    pub j_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams<T> {
    /// Trainable node feature table, when features are learned.
    pub embedding: Option<T>,
    pub layers: [GcnLayer<T>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    pub wz: T,
    pub bz: T,
    /// Reset gate; absent in the light variant.
    pub wr: Option<T>,
    pub br: Option<T>,
    pub wh: T,
    pub bh: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub layers: [GruLayer<T>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub d_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub gcn: GcnParams<T>,
    pub gru: GruParams<T>,
    pub attn: AttnParams<T>,
}

impl<T> ModelParams<T> {
    /// Visits every leaf in a fixed order with its name and group.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ParamGroup, &'a T)) {
        if let Some(e) = &self.gcn.embedding {
            f("gcn.embedding", ParamGroup::Gcn, e);
        }
        for (i, l) in self.gcn.layers.iter().enumerate() {
            let p = format!("gcn.l{}", i + 1);
            f(&format!("{p}.w"), ParamGroup::Gcn, &l.w);
            f(&format!("{p}.o"), ParamGroup::Gcn, &l.o);
            f(&format!("{p}.o_bias"), ParamGroup::Gcn, &l.o_bias);
            f(&format!("{p}.j"), ParamGroup::Gcn, &l.j);
            f(&format!("{p}.j_bias"), ParamGroup::Gcn, &l.j_bias);
        }
        for (i, l) in self.gru.layers.iter().enumerate() {
            let p = format!("gru.l{}", i + 1);
            f(&format!("{p}.wz"), ParamGroup::Gru, &l.wz);
            f(&format!("{p}.bz"), ParamGroup::Gru, &l.bz);
            if let Some(wr) = &l.wr {
                f(&format!("{p}.wr"), ParamGroup::Gru, wr);
            }
            if let Some(br) = &l.br {
                f(&format!("{p}.br"), ParamGroup::Gru, br);
            }
            f(&format!("{p}.wh"), ParamGroup::Gru, &l.wh);
            f(&format!("{p}.bh"), ParamGroup::Gru, &l.bh);
        }
        f("attn.wq", ParamGroup::Attention, &self.attn.wq);
        f("attn.wk", ParamGroup::Attention, &self.attn.wk);
        f("attn.wv", ParamGroup::Attention, &self.attn.wv);
    }

    /// Same order as [`visit`](Self::visit).
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamGroup, &mut T)) {
        if let Some(e) = &mut self.gcn.embedding {
            f("gcn.embedding", ParamGroup::Gcn, e);
        }
        for (i, l) in self.gcn.layers.iter_mut().enumerate() {
            let p = format!("gcn.l{}", i + 1);
            f(&format!("{p}.w"), ParamGroup::Gcn, &mut l.w);
            f(&format!("{p}.o"), ParamGroup::Gcn, &mut l.o);
            f(&format!("{p}.o_bias"), ParamGroup::Gcn, &mut l.o_bias);
            f(&format!("{p}.j"), ParamGroup::Gcn, &mut l.j);
            f(&format!("{p}.j_bias"), ParamGroup::Gcn, &mut l.j_bias);
        }
        for (i, l) in self.gru.layers.iter_mut().enumerate() {
            let p = format!("gru.l{}", i + 1);
            f(&format!("{p}.wz"), ParamGroup::Gru, &mut l.wz);
            f(&format!("{p}.bz"), ParamGroup::Gru, &mut l.bz);
            if let Some(wr) = &mut l.wr {
                f(&format!("{p}.wr"), ParamGroup::Gru, wr);
            }
            if let Some(br) = &mut l.br {
                f(&format!("{p}.br"), ParamGroup::Gru, br);
            }
            f(&format!("{p}.wh"), ParamGroup::Gru, &mut l.wh);
            f(&format!("{p}.bh"), ParamGroup::Gru, &mut l.bh);
        }
        f("attn.wq", ParamGroup::Attention, &mut self.attn.wq);
        f("attn.wk", ParamGroup::Attention, &mut self.attn.wk);
        f("attn.wv", ParamGroup::Attention, &mut self.attn.wv);
    }

    /// Structure-preserving conversion, in [`visit`](Self::visit) order.
    pub fn try_map<U>(&self, mut f: impl FnMut(&str, ParamGroup, &T) -> Result<U>) -> Result<ModelParams<U>> {
        let embedding = match &self.gcn.embedding {
            Some(e) => Some(f("gcn.embedding", ParamGroup::Gcn, e)?),
            None => None,
        };
        let l1 = gcn_layer_map(&mut f, "gcn.l1", &self.gcn.layers[0])?;
        let l2 = gcn_layer_map(&mut f, "gcn.l2", &self.gcn.layers[1])?;
        let g1 = gru_layer_map(&mut f, "gru.l1", &self.gru.layers[0])?;
        let g2 = gru_layer_map(&mut f, "gru.l2", &self.gru.layers[1])?;
        Ok(ModelParams {
            gcn: GcnParams {
                embedding,
                layers: [l1, l2],
            },
            gru: GruParams { layers: [g1, g2] },
            attn: AttnParams {
                wq: f("attn.wq", ParamGroup::Attention, &self.attn.wq)?,
                wk: f("attn.wk", ParamGroup::Attention, &self.attn.wk)?,
                wv: f("attn.wv", ParamGroup::Attention, &self.attn.wv)?,
                d_k: self.attn.d_k,
            },
        })
    }

    pub fn names(&self) -> Vec<(String, ParamGroup)> {
        let mut out = Vec::new();
        self.visit(&mut |n, g, _| out.push((n.to_string(), g)));
        out
    }
}

fn gcn_layer_map<T, U>(
    f: &mut impl FnMut(&str, ParamGroup, &T) -> Result<U>,
    p: &str,
    l: &GcnLayer<T>,
) -> Result<GcnLayer<U>> {
    Ok(GcnLayer {
        w: f(&format!("{p}.w"), ParamGroup::Gcn, &l.w)?,
        o: f(&format!("{p}.o"), ParamGroup::Gcn, &l.o)?,
        o_bias: f(&format!("{p}.o_bias"), ParamGroup::Gcn, &l.o_bias)?,
        j: f(&format!("{p}.j"), ParamGroup::Gcn, &l.j)?,
        j_bias: f(&format!("{p}.j_bias"), ParamGroup::Gcn, &l.j_bias)?,
    })
}

fn gru_layer_map<T, U>(
    f: &mut impl FnMut(&str, ParamGroup, &T) -> Result<U>,
    p: &str,
    l: &GruLayer<T>,
) -> Result<GruLayer<U>> {
    let wz = f(&format!("{p}.wz"), ParamGroup::Gru, &l.wz)?;
    let bz = f(&format!("{p}.bz"), ParamGroup::Gru, &l.bz)?;
    let wr = match &l.wr {
        Some(w) => Some(f(&format!("{p}.wr"), ParamGroup::Gru, w)?),
        None => None,
    };
    let br = match &l.br {
        Some(b) => Some(f(&format!("{p}.br"), ParamGroup::Gru, b)?),
        None => None,
    };
    Ok(GruLayer {
        wz,
        bz,
        wr,
        br,
        wh: f(&format!("{p}.wh"), ParamGroup::Gru, &l.wh)?,
        bh: f(&format!("{p}.bh"), ParamGroup::Gru, &l.bh)?,
    })
}

impl ModelParams<Tensor> {
    /// Total scalar count, optionally restricted to one group.
    pub fn count(&self, group: Option<ParamGroup>) -> usize {
        let mut n = 0;
        self.visit(&mut |_, g, t| {
            if group.map_or(true, |want| want == g) {
                n += t.len();
            }
        });
        n
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        let mut found = None;
        self.visit(&mut |n, _, t| {
            if n == name {
                found = Some(t);
            }
        });
        found
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, t| ok &= t.is_finite());
        ok
    }

    /// Replaces every tensor from `named` (by name), checking shapes.
    pub fn assign_from(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        let mut problems = Vec::new();
        let mut seen = 0usize;
        self.visit_mut(&mut |name, _, t| match named.iter().find(|(n, _)| n == name) {
            Some((_, v)) if v.shape() == t.shape() => {
                *t = v.clone();
                seen += 1;
            }
            Some((_, v)) => problems.push(format!(
                "{name}: checkpoint shape {:?}, model expects {:?}",
                v.shape(),
                t.shape()
            )),
            None => problems.push(format!("{name}: missing from checkpoint")),
        });
        if seen != named.len() && problems.is_empty() {
            problems.push(format!(
                "checkpoint holds {} tensors, model has {seen}",
                named.len()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Consistency(format!(
                "checkpoint incompatible with model: {}",
                problems.join("; ")
            )))
        }
    }
}

/// Scalar count of a two-layer GRU with `d_in` inputs and `d_h` hidden
/// units, computed from the gate equations rather than from a built model.
pub fn gru_param_count(d_in: usize, d_h: usize, variant: GruVariant) -> usize {
    let layer = |input: usize| match variant {
        // W^z, W^r, W^h over [h, x] plus three biases
        GruVariant::Full => 3 * ((d_h + input) * d_h + d_h),
        // W^z, W^h over x plus two biases
        GruVariant::Light => 2 * (input * d_h + d_h),
    };
    layer(d_in) + layer(d_h)
}

/// Glorot-uniform initialization.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
}

/// Entries drawn from N(0, 1).
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// Freshly initialized parameters. `feature_dim` is the width of the node
/// features fed to both encoders; `embedding_rows` adds a trainable feature
/// table with that many rows.
pub fn init_params<R: Rng + ?Sized>(
    feature_dim: usize,
    hidden: usize,
    embedding_rows: Option<usize>,
    variant: GruVariant,
    rng: &mut R,
) -> ModelParams<Tensor> {
    let embedding = embedding_rows.map(|n| standard_normal(n, feature_dim, rng));
    let gcn_layer = |input: usize, rng: &mut R| GcnLayer {
        w: glorot(input, hidden, rng),
        o: glorot(hidden, hidden, rng),
        o_bias: Tensor::zeros(1, hidden),
        j: glorot(input, hidden, rng),
        j_bias: Tensor::zeros(1, hidden),
    };
    let gcn = GcnParams {
        embedding,
        layers: [gcn_layer(feature_dim, rng), gcn_layer(hidden, rng)],
    };
    let gru_layer = |input: usize, rng: &mut R| {
        let gate_in = match variant {
            GruVariant::Full => hidden + input,
            GruVariant::Light => input,
        };
        let wz = glorot(gate_in, hidden, rng);
        let (wr, br) = match variant {
            GruVariant::Full => (Some(glorot(gate_in, hidden, rng)), Some(Tensor::zeros(1, hidden))),
            GruVariant::Light => (None, None),
        };
        GruLayer {
            wz,
            bz: Tensor::zeros(1, hidden),
            wr,
            br,
            wh: glorot(gate_in, hidden, rng),
            bh: Tensor::zeros(1, hidden),
        }
    };
    let gru = GruParams {
        layers: [gru_layer(feature_dim, rng), gru_layer(hidden, rng)],
    };
    let attn = AttnParams {
        wq: glorot(hidden, hidden, rng),
        wk: glorot(hidden, hidden, rng),
        wv: glorot(hidden, hidden, rng),
        d_k: hidden,
    };
    ModelParams { gcn, gru, attn }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn built_counts_match_symbolic_counts() {
        for variant in [GruVariant::Full, GruVariant::Light] {
            let p = init_params(7, 5, None, variant, &mut ChaCha8Rng::seed_from_u64(0));
            assert_eq!(p.count(Some(ParamGroup::Gru)), gru_param_count(7, 5, variant));
        }
    }

    #[test]
    fn light_variant_has_no_reset_gate() {
        let p = init_params(4, 4, Some(10), GruVariant::Light, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(p.names().iter().all(|(n, _)| !n.ends_with(".wr") && !n.ends_with(".br")));
        let full = init_params(4, 4, Some(10), GruVariant::Full, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(full.get("gru.l2.wr").is_some());
    }

    #[test]
    fn groups_partition_the_names() {
        let p = init_params(4, 3, Some(6), GruVariant::Full, &mut ChaCha8Rng::seed_from_u64(0));
        let names = p.names();
        let mut unique: Vec<_> = names.iter().map(|(n, _)| n.clone()).collect();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), names.len());
        for (n, g) in &names {
            let expect = match n.split('.').next().unwrap() {
                "gcn" => ParamGroup::Gcn,
                "gru" => ParamGroup::Gru,
                "attn" => ParamGroup::Attention,
                other => panic!("unexpected prefix {other}"),
            };
            assert_eq!(*g, expect, "{n}");
        }
        let total: usize = [ParamGroup::Gcn, ParamGroup::Gru, ParamGroup::Attention]
            .iter()
            .map(|&g| p.count(Some(g)))
            .sum();
        assert_eq!(total, p.count(None));
    }

    #[test]
    fn try_map_preserves_order() {
        let p = init_params(3, 2, Some(4), GruVariant::Full, &mut ChaCha8Rng::seed_from_u64(1));
        let mapped = p.try_map(|n, _, _| Ok(n.to_string())).unwrap();
        let mut via_map = Vec::new();
        mapped.visit(&mut |_, _, s| via_map.push(s.clone()));
        let names: Vec<String> = p.names().into_iter().map(|(n, _)| n).collect();
        assert_eq!(via_map, names);
    }

    #[test]
    fn assign_detects_shape_mismatch() {
        let mut p = init_params(3, 2, None, GruVariant::Light, &mut ChaCha8Rng::seed_from_u64(1));
        let mut named = Vec::new();
        p.visit(&mut |n, _, t| named.push((n.to_string(), t.clone())));
        named[0].1 = Tensor::zeros(9, 9);
        assert!(matches!(p.assign_from(&named), Err(Error::Consistency(_))));
    }
}
