//! HiPPO state-space memory over parameter gradients and the inner
//! parameter update that reads it.
//!
//! Each GCN parameter tensor carries a state of the same shape. The flattened
//! gradient is cut into blocks of `B` entries and every block advances as
//! `s_t = K̂ s_{t−1} + weight·g`.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Lower-triangular `n×n` HiPPO matrix with exact integer entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HippoMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl HippoMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    /// `out = K̂[..m, ..m] · s` for `m = s.len() ≤ n`. Truncating to the
    /// leading block is the same as zero-padding `s` and dropping the tail
    /// of the product, because `K̂` is lower-triangular.
    fn apply_leading(&self, s: &[f64], out: &mut [f64]) {
        debug_assert!(s.len() <= self.n && out.len() == s.len());
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * self.n..i * self.n + i + 1];
            *o = row.iter().zip(s).map(|(&k, &x)| k as f64 * x).sum();
        }
    }
}

/// `K̂[i][j] = (−1)^{i−j}(2i+1)` below the diagonal, 2 on it, 0 above
/// (0-based indices).
pub fn hippo_matrix(n: usize) -> Result<HippoMatrix> {
    if n < 1 {
        return Err(Error::Config("HiPPO dimension must be >= 1".into()));
    }
    let mut entries = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..=i {
            entries[i * n + j] = if i == j {
                2
            } else {
                let sign = if (i - j) % 2 == 0 { 1 } else { -1 };
                sign * (2 * i as i64 + 1)
            };
        }
    }
    Ok(HippoMatrix { n, entries })
}

/// Default `ε` in [`dynamic_weight`].
pub const WEIGHT_EPS: f64 = 1e-8;

/// `1 / (loss + ε)`: snapshots with a higher loss feed less into the state.
pub fn dynamic_weight(loss: f64, eps: f64) -> Result<f64> {
    if !(loss >= 0.0) {
        return Err(Error::Contract(format!("dynamic weight needs loss >= 0, got {loss}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("dynamic weight needs eps > 0, got {eps}")));
    }
    Ok(1.0 / (loss + eps))
}

/// Per-tensor states, kept in the same order and shape as the parameters
/// they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmState {
    block_size: usize,
    hippo: HippoMatrix,
    states: Vec<(String, Tensor)>,
}

impl SsmState {
    /// Zero states shaped like `params`.
    pub fn zeros(params: &[(String, Tensor)], block_size: usize) -> Result<Self> {
        Ok(SsmState {
            block_size,
            hippo: hippo_matrix(block_size)?,
            states: params
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.rows(), t.cols())))
                .collect(),
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn hippo(&self) -> &HippoMatrix {
        &self.hippo
    }

    pub fn states(&self) -> &[(String, Tensor)] {
        &self.states
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.states.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn reset(&mut self) {
        for (_, s) in &mut self.states {
            s.data_mut().fill(0.0);
        }
    }

    /// Replaces the state values, e.g. from a checkpoint.
    pub fn load(&mut self, states: Vec<(String, Tensor)>) -> Result<()> {
        check_aligned("state", &self.states, &states)?;
        self.states = states;
        Ok(())
    }
}

fn check_aligned(what: &str, expect: &[(String, Tensor)], got: &[(String, Tensor)]) -> Result<()> {
    if expect.len() != got.len() {
        return Err(Error::Consistency(format!(
            "{what} has {} tensors, expected {}",
            got.len(),
            expect.len()
        )));
    }
    for ((en, et), (gn, gt)) in expect.iter().zip(got) {
        if en != gn || et.shape() != gt.shape() {
            return Err(Error::Consistency(format!(
                "{what} tensor {gn} {:?} does not match {en} {:?}",
                gt.shape(),
                et.shape()
            )));
        }
    }
    Ok(())
}

/// Advances every state by one step: per block, `s ← K̂ s + weight·g`.
pub fn ssm_step(state: &mut SsmState, grads: &[(String, Tensor)], weight: f64) -> Result<()> {
    check_aligned("gradient", &state.states, grads)?;
    let b = state.block_size;
    let mut scratch = vec![0.0; b];
    for ((_, s), (_, g)) in state.states.iter_mut().zip(grads) {
        for (sb, gb) in s.data_mut().chunks_mut(b).zip(g.data().chunks(b)) {
            let out = &mut scratch[..sb.len()];
            state.hippo.apply_leading(sb, out);
            for ((x, &o), &gi) in sb.iter_mut().zip(out.iter()).zip(gb) {
                *x = o + weight * gi;
            }
        }
    }
    Ok(())
}

/// How the state enters the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsmMode {
    /// `Θ − η(g + Θ⊙s)`.
    #[default]
    Descent,
    /// `g + Θ⊙s`, taken literally.
    Verbatim,
}

/// The SSM-gated update of a parameter list. A non-finite result is a
/// numeric error naming the tensor.
pub fn apply_ssm_update(
    theta: &[(String, Tensor)],
    grads: &[(String, Tensor)],
    state: &SsmState,
    eta: f64,
    mode: SsmMode,
) -> Result<Vec<(String, Tensor)>> {
    check_aligned("parameter", &state.states, theta)?;
    check_aligned("gradient", &state.states, grads)?;
    let mut out = Vec::with_capacity(theta.len());
    for (((name, p), (_, g)), (_, s)) in theta.iter().zip(grads).zip(&state.states) {
        let data: Vec<f64> = p
            .data()
            .iter()
            .zip(g.data())
            .zip(s.data())
            .map(|((&p, &g), &s)| match mode {
                SsmMode::Descent => p - eta * (g + p * s),
                SsmMode::Verbatim => g + p * s,
            })
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "SSM update of {name} produced {} at flat index {i}",
                data[i]
            )));
        }
        out.push((name.clone(), Tensor::from_vec(p.rows(), p.cols(), data)?));
    }
    Ok(out)
}

/// `Θ − η·g`, the update used when the SSM is switched off.
pub fn plain_step(
    theta: &[(String, Tensor)],
    grads: &[(String, Tensor)],
    eta: f64,
) -> Result<Vec<(String, Tensor)>> {
    check_aligned("gradient", theta, grads)?;
    let mut out = Vec::with_capacity(theta.len());
    for ((name, p), (_, g)) in theta.iter().zip(grads) {
        let mut next = p.clone();
        next.axpy(-eta, g)?;
        if !next.is_finite() {
            return Err(Error::Numeric(format!("gradient step of {name} is not finite")));
        }
        out.push((name.clone(), next));
    }
    Ok(out)
}
