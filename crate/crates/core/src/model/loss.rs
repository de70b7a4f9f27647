//! Dot-product edge decoder and binary cross-entropy.

use crate::autodiff::{sigmoid, Tape, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

/// `σ(h_u · h_v)`.
pub fn score_edge(h_u: &[f64], h_v: &[f64]) -> f64 {
    debug_assert_eq!(h_u.len(), h_v.len());
    sigmoid(h_u.iter().zip(h_v).map(|(a, b)| a * b).sum())
}

/// Edge probabilities for `pairs` as an `M×1` column.
pub fn pair_probabilities(tape: &mut Tape, embeddings: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let hu = tape.gather_rows(embeddings, &us)?;
    let hv = tape.gather_rows(embeddings, &vs)?;
    let prod = tape.mul_elem(hu, hv)?;
    let dots = tape.sum_cols(prod);
    Ok(tape.sigmoid(dots))
}

/// Mean BCE over `positives` (label 1) followed by `negatives` (label 0).
pub fn bce_loss(
    tape: &mut Tape,
    embeddings: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<Var> {
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::Contract("loss over an empty edge set".into()));
    }
    let pairs: Vec<(usize, usize)> = positives.iter().chain(negatives).copied().collect();
    let labels: Vec<f64> = std::iter::repeat(1.0)
        .take(positives.len())
        .chain(std::iter::repeat(0.0).take(negatives.len()))
        .collect();
    let probs = pair_probabilities(tape, embeddings, &pairs)?;
    tape.bce(probs, &labels, BCE_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn scores() {
        assert_eq!(score_edge(&[1.0, 0.0], &[0.0, 5.0]), 0.5);
        assert_eq!(score_edge(&[0.0, 0.0], &[0.0, 0.0]), 0.5);
        assert!((score_edge(&[1.0, 0.0], &[3.0, 0.0]) - 0.952_574_126_822_433_4).abs() < 1e-15);
        assert_eq!(score_edge(&[0.3, -2.0], &[1.0, 0.1]), score_edge(&[1.0, 0.1], &[0.3, -2.0]));
    }

    #[test]
    fn half_probabilities_give_ln2() {
        let mut tape = Tape::new();
        let emb = tape.constant(Tensor::zeros(4, 3));
        let loss = bce_loss(&mut tape, emb, &[(0, 1), (2, 3)], &[(0, 3)]).unwrap();
        assert!((tape.value(loss).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_scored_batch() {
        // probabilities {0.9, 0.8} for positives and {0.3, 0.1} for negatives
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&[[0.9], [0.8], [0.3], [0.1]]));
        let loss = tape.bce(p, &[1.0, 1.0, 0.0, 0.0], BCE_EPS).unwrap();
        let expect = -(0.9f64.ln() + 0.8f64.ln() + 0.7f64.ln() + 0.9f64.ln()) / 4.0;
        assert!((tape.value(loss).item().unwrap() - expect).abs() < 1e-15);
        // The formula evaluates to 0.19763; a quoted 0.1838 does not match it.
        assert!((expect - 0.197_63).abs() < 1e-5);
    }

    #[test]
    fn saturated_scores_clamp_to_near_zero() {
        let mut tape = Tape::new();
        let emb = tape.constant(Tensor::from_rows(&[[40.0, 0.0], [40.0, 0.0], [-40.0, 0.0]]));
        let loss = bce_loss(&mut tape, emb, &[(0, 1)], &[(0, 2)]).unwrap();
        let v = tape.value(loss).item().unwrap();
        assert!((0.0..1e-10).contains(&v), "{v}");
    }

    #[test]
    fn empty_edge_set_rejected() {
        let mut tape = Tape::new();
        let emb = tape.constant(Tensor::zeros(2, 2));
        assert!(matches!(bce_loss(&mut tape, emb, &[], &[]), Err(Error::Contract(_))));
    }
}
