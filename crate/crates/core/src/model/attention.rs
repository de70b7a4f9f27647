use super::params::AttnParams;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Single-head cross-attention with local embeddings as queries and global
/// embeddings as keys and values:
/// `softmax(Q Kᵀ / √d_k) V`, `Q = X_local W_q`, `K = X_global W_k`,
/// `V = X_global W_v`.
///
/// Returns the fused embeddings and the attention matrix.
pub fn cross_attention(
    tape: &mut Tape,
    local: Var,
    global: Var,
    params: &AttnParams<Var>,
) -> Result<(Var, Var)> {
    if tape.shape(local) != tape.shape(global) {
        return Err(Error::dim("cross_attention", tape.shape(local), tape.shape(global)));
    }
    let q = tape.matmul(local, params.wq)?;
    let k = tape.matmul(global, params.wk)?;
    let v = tape.matmul(global, params.wv)?;
    let kt = tape.transpose(k);
    let logits = tape.matmul(q, kt)?;
    let logits = tape.scale(logits, 1.0 / (params.d_k as f64).sqrt());
    let weights = tape.softmax_rows(logits);
    let fused = tape.matmul(weights, v)?;
    Ok((fused, weights))
}
