//! Two-layer GRU (full or light) over walk summaries.

use super::params::{GruLayer, GruParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Snapshot;
use crate::walk::{padded_sequence, WalkCache};

/// Runs one layer over `inputs` (each `batch×d_in`) from a zero hidden
/// state and returns every hidden state.
///
/// Full cell:
/// ```text
/// z = σ([h, x]·W^z + b^z)
/// r = σ([h, x]·W^r + b^r)
/// ĥ = tanh([r⊙h, x]·W^h + b^h)
/// h' = (1 − z)⊙h + z⊙ĥ
/// ```
/// The light cell drops `r` and the `tanh`, and its gates read `x` only.
pub fn gru_layer(tape: &mut Tape, inputs: &[Var], layer: &GruLayer<Var>) -> Result<Vec<Var>> {
    let first = *inputs
        .first()
        .ok_or_else(|| Error::Contract("GRU input sequence is empty".into()))?;
    let batch = tape.shape(first).0;
    let hidden = tape.shape(layer.bz).1;
    let mut h = tape.constant(Tensor::zeros(batch, hidden));
    let mut states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (z, candidate) = match (layer.wr, layer.br) {
            (Some(wr), Some(br)) => {
                let hx = tape.concat_cols(h, x)?;
                let z = tape.matmul(hx, layer.wz)?;
                let z = tape.add(z, layer.bz)?;
                let z = tape.sigmoid(z);
                let r = tape.matmul(hx, wr)?;
                let r = tape.add(r, br)?;
                let r = tape.sigmoid(r);
                let rh = tape.mul_elem(r, h)?;
                let rhx = tape.concat_cols(rh, x)?;
                let c = tape.matmul(rhx, layer.wh)?;
                let c = tape.add(c, layer.bh)?;
                (z, tape.tanh(c))
            }
            (None, None) => {
                let z = tape.matmul(x, layer.wz)?;
                let z = tape.add(z, layer.bz)?;
                let z = tape.sigmoid(z);
                let c = tape.matmul(x, layer.wh)?;
                (z, tape.add(c, layer.bh)?)
            }
            _ => {
                return Err(Error::Consistency(
                    "GRU layer has only one of the reset-gate weight and bias".into(),
                ))
            }
        };
        // (1 − z)⊙h + z⊙ĥ = h + z⊙(ĥ − h)
        let delta = tape.sub(candidate, h)?;
        let gated = tape.mul_elem(z, delta)?;
        h = tape.add(h, gated)?;
        states.push(h);
    }
    Ok(states)
}

/// Final hidden state of layer 2, where layer 2 reads layer 1's hidden
/// states as its input sequence.
pub fn gru_forward(tape: &mut Tape, sequence: &[Var], params: &GruParams<Var>) -> Result<Var> {
    let first = gru_layer(tape, sequence, &params.layers[0])?;
    let second = gru_layer(tape, &first, &params.layers[1])?;
    Ok(*second.last().expect("non-empty input gives non-empty output"))
}

/// Global node embeddings for one snapshot: each node with at least one
/// neighbor runs the GRU over the feature rows of its (padded) walk summary;
/// isolated nodes get a zero row.
pub fn encode_global(
    tape: &mut Tape,
    snapshot: &Snapshot,
    cache: &WalkCache,
    features: Var,
    params: &GruParams<Var>,
) -> Result<Var> {
    let n = snapshot.node_count();
    let hidden = tape.shape(params.layers[1].bz).1;
    let t = snapshot.index();
    let top_k = cache.top_k();
    let mut sequences = Vec::with_capacity(n);
    let mut mask = Tensor::zeros(n, hidden);
    let mut any_active = false;
    for u in 0..n {
        if snapshot.degree(u) == 0 {
            sequences.push(vec![u; top_k]);
            continue;
        }
        let summary = cache
            .summary(t, u)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::Consistency(format!("walk cache has no entry for node {u} in snapshot {t}"))
            })?;
        sequences.push(padded_sequence(summary, u, top_k));
        mask.data_mut()[u * hidden..(u + 1) * hidden].fill(1.0);
        any_active = true;
    }
    if !any_active {
        return Ok(tape.constant(Tensor::zeros(n, hidden)));
    }
    let mut inputs = Vec::with_capacity(top_k);
    for s in 0..top_k {
        let rows: Vec<usize> = sequences.iter().map(|seq| seq[s]).collect();
        inputs.push(tape.gather_rows(features, &rows)?);
    }
    let h = gru_forward(tape, &inputs, params)?;
    let mask = tape.constant(mask);
    tape.mul_elem(h, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid;

    fn consts(tape: &mut Tape, l: &GruLayer<Tensor>) -> GruLayer<Var> {
        GruLayer {
            wz: tape.constant(l.wz.clone()),
            bz: tape.constant(l.bz.clone()),
            wr: l.wr.as_ref().map(|t| tape.constant(t.clone())),
            br: l.br.as_ref().map(|t| tape.constant(t.clone())),
            wh: tape.constant(l.wh.clone()),
            bh: tape.constant(l.bh.clone()),
        }
    }

    #[test]
    fn light_zero_weights_keep_zero_state() {
        let layer = GruLayer {
            wz: Tensor::zeros(3, 2),
            bz: Tensor::zeros(1, 2),
            wr: None,
            br: None,
            wh: Tensor::zeros(3, 2),
            bh: Tensor::zeros(1, 2),
        };
        let mut tape = Tape::new();
        let l = consts(&mut tape, &layer);
        let xs: Vec<Var> = (0..4)
            .map(|i| tape.constant(Tensor::filled(1, 3, i as f64)))
            .collect();
        let states = gru_layer(&mut tape, &xs, &l).unwrap();
        for s in states {
            assert_eq!(tape.value(s), &Tensor::zeros(1, 2));
        }
    }

    #[test]
    fn full_scalar_step_matches_hand_computation() {
        // 1-D hidden and input; h⁰ = 0, x = 0.8.
        let (wz, wr, wh) = ([0.3, -0.6], [1.1, 0.4], [0.9, -1.3]);
        let (bz, br, bh) = (0.1, -0.2, 0.05);
        let x = 0.8;
        let layer = GruLayer {
            wz: Tensor::from_rows(&[[wz[0]], [wz[1]]]),
            bz: Tensor::scalar(bz),
            wr: Some(Tensor::from_rows(&[[wr[0]], [wr[1]]])),
            br: Some(Tensor::scalar(br)),
            wh: Tensor::from_rows(&[[wh[0]], [wh[1]]]),
            bh: Tensor::scalar(bh),
        };
        let mut tape = Tape::new();
        let l = consts(&mut tape, &layer);
        let xv = tape.constant(Tensor::scalar(x));
        let states = gru_layer(&mut tape, &[xv, xv], &l).unwrap();

        let step = |h: f64| {
            let z = sigmoid(wz[0] * h + wz[1] * x + bz);
            let r = sigmoid(wr[0] * h + wr[1] * x + br);
            let c = (wh[0] * r * h + wh[1] * x + bh).tanh();
            (1.0 - z) * h + z * c
        };
        let h1 = step(0.0);
        let h2 = step(h1);
        assert!((tape.value(states[0]).item().unwrap() - h1).abs() < 1e-15);
        assert!((tape.value(states[1]).item().unwrap() - h2).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_is_a_contract_error() {
        let layer = GruLayer {
            wz: Tensor::zeros(1, 1),
            bz: Tensor::zeros(1, 1),
            wr: None,
            br: None,
            wh: Tensor::zeros(1, 1),
            bh: Tensor::zeros(1, 1),
        };
        let mut tape = Tape::new();
        let l = consts(&mut tape, &layer);
        assert!(matches!(gru_layer(&mut tape, &[], &l), Err(Error::Contract(_))));
    }
}
