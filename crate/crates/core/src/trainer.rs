//! Sliding-window training with state-space inner updates.
//!
//! Per window `[w, w+Δt)` and snapshot `t` inside it:
//!
//! 1. fused loss `L_t` on snapshot `t` with the current fast GCN weights;
//! 2. its GCN gradient advances the SSM state (weighted by `1/(L_t + ε)`)
//!    and moves the fast weights;
//! 3. the fast weights are scored on snapshot `t+1` (fused loss) and the
//!    GRU on snapshot `t+1` (global loss).
//!
//! After the window the two next-snapshot loss means are backpropagated and
//! one Adam step updates GCN + attention (fused) and GRU (global).
//!
//! The inner update is recorded on the outer tape with the gradient and
//! state held constant, so the outer gradient flows through
//! `Θ_t = Θ_{t−1} − η(g + Θ_{t−1}⊙s)` but not through `g` or `s`.

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::config::{train_snapshots, RunConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate_with;
use crate::graph::{negative_sample, Snapshot};
use crate::model::{
    bce_loss, bind, forward, global_embeddings, Checkpoint, Model, ModelConfig, ModelParams,
    ParamGroup,
};
use crate::optim::{adam_step, AdamState};
use crate::prepared::PreparedGraph;
use crate::rng;
use crate::ssm::{apply_ssm_update, dynamic_weight, plain_step, ssm_step, SsmMode, SsmState};

/// Overlapping windows of `delta_t` snapshots, each shifted by one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub delta_t: usize,
    pub windows: Vec<Range<usize>>,
}

impl WindowPlan {
    /// Windows over snapshots `0..span`.
    pub fn new(span: usize, delta_t: usize) -> Result<Self> {
        if delta_t == 0 || delta_t > span {
            return Err(Error::Config(format!(
                "window size {delta_t} does not fit {span} snapshots"
            )));
        }
        Ok(WindowPlan {
            delta_t,
            windows: (0..=span - delta_t).map(|w| w..w + delta_t).collect(),
        })
    }

    /// Same starts, each window's length drawn uniformly from `1..=Δt`.
    pub fn randomized<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Range<usize>> {
        self.windows
            .iter()
            .map(|w| w.start..w.start + rng.gen_range(1..=self.delta_t))
            .collect()
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub window: usize,
    /// Snapshot the losses were measured on (`t + 1`).
    pub snapshot: usize,
    pub loss_fused: f64,
    /// Absent when the global view is off.
    pub loss_global: Option<f64>,
    pub val_mrr: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,window,snapshot,loss_fused,loss_global,val_mrr\n");
    for r in rows {
        let global = r.loss_global.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.window, r.snapshot, r.loss_fused, global, r.val_mrr
        );
    }
    out
}

/// What the inner loop did at one snapshot.
#[derive(Debug, Clone)]
pub struct InnerStep<'a> {
    pub snapshot: usize,
    pub loss: f64,
    pub theta_before: &'a [(String, Tensor)],
    pub grads: &'a [(String, Tensor)],
    pub theta_after: &'a [(String, Tensor)],
    /// `None` when the SSM is disabled.
    pub state: Option<&'a SsmState>,
}

/// Everything the training loop carries between windows.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub ssm: SsmState,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val_mrr: f64,
    pub epochs_without_improvement: usize,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn new(cfg: &RunConfig, model: &ModelConfig) -> Result<Self> {
        let params = model.init_params(cfg.seed);
        let ssm = SsmState::zeros(&group_tensors(&params, ParamGroup::Gcn), cfg.ssm_block)?;
        let adam = AdamState::new(cfg.adam_config(), &params);
        Ok(TrainState {
            params,
            ssm,
            adam,
            epoch: 0,
            best_val_mrr: f64::NEG_INFINITY,
            epochs_without_improvement: 0,
            history: Vec::new(),
        })
    }
}

/// Named tensors of one group, in traversal order.
pub fn group_tensors(params: &ModelParams, group: ParamGroup) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    params.visit(&mut |n, g, t| {
        if g == group {
            out.push((n.to_string(), t.clone()));
        }
    });
    out
}

fn group_vars(bound: &ModelParams<Var>, group: ParamGroup) -> Vec<Var> {
    let mut out = Vec::new();
    bound.visit(&mut |_, g, v| {
        if g == group {
            out.push(*v);
        }
    });
    out
}

fn set_group_vars(bound: &mut ModelParams<Var>, group: ParamGroup, vars: &[Var]) {
    let mut it = vars.iter();
    bound.visit_mut(&mut |_, g, v| {
        if g == group {
            *v = *it.next().expect("one var per tensor");
        }
    });
}

fn with_group(params: &ModelParams, group: ParamGroup, values: &[(String, Tensor)]) -> ModelParams {
    let mut p = params.clone();
    let mut it = values.iter();
    p.visit_mut(&mut |_, g, t| {
        if g == group {
            *t = it.next().expect("one value per tensor").1.clone();
        }
    });
    p
}

/// One negative `(u, v')` per positive `(u, v)`, drawn from `u`'s
/// non-neighbors. Positives whose source has no candidate get none.
fn training_negatives<R: Rng + ?Sized>(
    snapshot: &Snapshot,
    positives: &[(usize, usize)],
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let nodes = snapshot.nodes();
    let mut out = Vec::with_capacity(positives.len());
    for &(u, _) in positives {
        let mut found = None;
        for _ in 0..32 {
            let v = nodes[rng.gen_range(0..nodes.len())];
            if v != u && !snapshot.has_edge(u, v) {
                found = Some(v);
                break;
            }
        }
        if found.is_none() {
            found = match negative_sample(snapshot, u, 1, rng) {
                Ok(v) => Some(v[0]),
                Err(Error::Input(_)) => None,
                Err(e) => return Err(e),
            };
        }
        if let Some(v) = found {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// Loss-tag for negative streams.
const INNER: u64 = 0;
const NEXT: u64 = 1;

fn finite(value: f64, what: &str, t: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!("{what} at snapshot {t} is {value}")))
    }
}

fn take_group_grads(grads: &mut Gradients, vars: &[Var], like: &[(String, Tensor)]) -> Vec<(String, Tensor)> {
    vars.iter()
        .zip(like)
        .map(|(&v, (n, t))| (n.clone(), grads.take_or_zeros(v, t.shape())))
        .collect()
}

fn mean(tape: &mut Tape, losses: &[Var]) -> Result<Var> {
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = tape.add(total, l)?;
    }
    Ok(tape.scale(total, 1.0 / losses.len() as f64))
}

/// Runs one window and applies the outer Adam step. On failure the
/// parameters, SSM state and optimizer are left as they were.
pub fn run_window(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedGraph,
    state: &mut TrainState,
    window: Range<usize>,
    window_index: usize,
    mut probe: Option<&mut dyn FnMut(&InnerStep<'_>)>,
) -> Result<Vec<HistoryRow>> {
    if window.is_empty() || window.end >= data.len() {
        return Err(Error::Contract(format!(
            "window {window:?} needs snapshots through {} but there are {}",
            window.end,
            data.len()
        )));
    }
    let epoch = state.epoch;
    let saved_ssm = state.ssm.clone();
    if !cfg.ssm_state_persist {
        state.ssm.reset();
    }
    let result = window_pass(cfg, model, data, state, window, window_index, &mut probe);
    match result {
        Ok((rows, grads)) => {
            let mut params = state.params.clone();
            let mut adam = state.adam.clone();
            let outer = grads
                .map(|g| adam_step(&mut adam, &mut params, &g))
                .transpose()
                .and_then(|_| {
                    if params.is_finite() {
                        Ok(())
                    } else {
                        Err(Error::Numeric(format!(
                            "parameters not finite after window {window_index} (epoch {epoch})"
                        )))
                    }
                });
            match outer {
                Ok(()) => {
                    state.params = params;
                    state.adam = adam;
                    Ok(rows)
                }
                Err(e) => {
                    state.ssm = saved_ssm;
                    Err(e)
                }
            }
        }
        Err(e) => {
            state.ssm = saved_ssm;
            Err(match e {
                Error::Numeric(m) => Error::Numeric(format!("window {window_index} (epoch {epoch}): {m}")),
                other => other,
            })
        }
    }
}

/// The inner loop. Returns history rows and the outer gradient, or `None`
/// when no snapshot in the window had a next-snapshot loss.
fn window_pass(
    cfg: &RunConfig,
    model: &ModelConfig,
    data: &PreparedGraph,
    state: &mut TrainState,
    window: Range<usize>,
    window_index: usize,
    probe: &mut Option<&mut dyn FnMut(&InnerStep<'_>)>,
) -> Result<(Vec<HistoryRow>, Option<ModelParams>)> {
    let epoch = state.epoch as u64;
    let w = window_index as u64;
    let slow = &state.params;
    let mut theta = group_tensors(slow, ParamGroup::Gcn);

    // Outer fused tape: GCN and attention trainable, GRU fixed.
    let mut outer = Tape::new();
    let mut outer_bound = bind(&mut outer, slow, |g| g != ParamGroup::Gru);
    let gcn_leaves = group_vars(&outer_bound, ParamGroup::Gcn);
    let attn_leaves = group_vars(&outer_bound, ParamGroup::Attention);
    let mut gcn_now = gcn_leaves.clone();

    // Global tape: only the GRU is trainable.
    let mut global = Tape::new();
    let global_bound = bind(&mut global, slow, |g| g == ParamGroup::Gru);
    let gru_leaves = group_vars(&global_bound, ParamGroup::Gru);

    let mut fused_losses = Vec::new();
    let mut global_losses = Vec::new();
    let mut rows = Vec::new();

    for t in window {
        // Inner step on snapshot t.
        let snap = data.graph().snapshot(t);
        let positives = snap.positive_pairs();
        if !positives.is_empty() {
            let mut r = rng::stream(cfg.seed, &[rng::purpose::TRAIN_NEGATIVES, epoch, w, t as u64, INNER]);
            let negatives = training_negatives(snap, &positives, &mut r)?;
            let mut scratch = Tape::new();
            let fast = with_group(slow, ParamGroup::Gcn, &theta);
            let bound = bind(&mut scratch, &fast, |g| g == ParamGroup::Gcn);
            let leaves = group_vars(&bound, ParamGroup::Gcn);
            let emb = forward(&mut scratch, model, &bound, &data.view(t))?;
            let loss = bce_loss(&mut scratch, emb.fused, &positives, &negatives)?;
            let loss_value = finite(scratch.value(loss).item()?, "inner fused loss", t)?;
            let mut grads = scratch.backward(loss)?;
            let g = take_group_grads(&mut grads, &leaves, &theta);
            if g.iter().any(|(_, t)| !t.is_finite()) {
                return Err(Error::Numeric(format!("inner gradient at snapshot {t} is not finite")));
            }

            let next_theta = if cfg.no_ssm {
                plain_step(&theta, &g, cfg.eta)?
            } else {
                let weight = dynamic_weight(loss_value, cfg.weight_eps)?;
                ssm_step(&mut state.ssm, &g, weight)?;
                apply_ssm_update(&theta, &g, &state.ssm, cfg.eta, cfg.ssm_mode)
                    .map_err(|e| match e {
                        Error::Numeric(m) => Error::Numeric(format!("snapshot {t}: {m}")),
                        other => other,
                    })?
            };

            // Same update on the outer tape with g and s constant.
            for (i, (_, gi)) in g.iter().enumerate() {
                let prev = gcn_now[i];
                let gv = outer.constant(gi.clone());
                gcn_now[i] = if cfg.no_ssm {
                    let step = outer.scale(gv, cfg.eta);
                    outer.sub(prev, step)?
                } else {
                    let s = outer.constant(state.ssm.states()[i].1.clone());
                    let gated = outer.mul_elem(prev, s)?;
                    let dir = outer.add(gv, gated)?;
                    match cfg.ssm_mode {
                        SsmMode::Descent => {
                            let step = outer.scale(dir, cfg.eta);
                            outer.sub(prev, step)?
                        }
                        SsmMode::Verbatim => dir,
                    }
                };
            }

            if let Some(p) = probe.as_mut() {
                p(&InnerStep {
                    snapshot: t,
                    loss: loss_value,
                    theta_before: &theta,
                    grads: &g,
                    theta_after: &next_theta,
                    state: (!cfg.no_ssm).then_some(&state.ssm),
                });
            }
            theta = next_theta;
        }

        // Next-snapshot losses.
        let next = t + 1;
        let nsnap = data.graph().snapshot(next);
        let npos = nsnap.positive_pairs();
        if npos.is_empty() {
            continue;
        }
        let mut r = rng::stream(cfg.seed, &[rng::purpose::TRAIN_NEGATIVES, epoch, w, next as u64, NEXT]);
        let nneg = training_negatives(nsnap, &npos, &mut r)?;
        set_group_vars(&mut outer_bound, ParamGroup::Gcn, &gcn_now);
        let emb = forward(&mut outer, model, &outer_bound, &data.view(next))?;
        let lf = bce_loss(&mut outer, emb.fused, &npos, &nneg)?;
        let lf_value = finite(outer.value(lf).item()?, "fused loss", next)?;
        fused_losses.push(lf);

        let lg_value = if model.use_global {
            let g = global_embeddings(&mut global, model, &global_bound, &data.view(next))?;
            let lg = bce_loss(&mut global, g, &npos, &nneg)?;
            let v = finite(global.value(lg).item()?, "global loss", next)?;
            global_losses.push(lg);
            Some(v)
        } else {
            None
        };
        rows.push(HistoryRow {
            epoch: state.epoch,
            window: window_index,
            snapshot: next,
            loss_fused: lf_value,
            loss_global: lg_value,
            val_mrr: f64::NAN,
        });
    }

    if fused_losses.is_empty() {
        return Ok((rows, None));
    }
    let lf = mean(&mut outer, &fused_losses)?;
    let mut fused_grads = outer.backward(lf)?;
    let mut global_grads = if global_losses.is_empty() {
        None
    } else {
        let lg = mean(&mut global, &global_losses)?;
        Some(global.backward(lg)?)
    };

    let gcn_like = group_tensors(slow, ParamGroup::Gcn);
    let attn_like = group_tensors(slow, ParamGroup::Attention);
    let gru_like = group_tensors(slow, ParamGroup::Gru);
    let gcn_g = take_group_grads(&mut fused_grads, &gcn_leaves, &gcn_like);
    let attn_g = take_group_grads(&mut fused_grads, &attn_leaves, &attn_like);
    let gru_g = match global_grads.as_mut() {
        Some(gg) => take_group_grads(gg, &gru_leaves, &gru_like),
        None => gru_like
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.rows(), t.cols())))
            .collect(),
    };
    let mut grads = with_group(slow, ParamGroup::Gcn, &gcn_g);
    grads = with_group(&grads, ParamGroup::Attention, &attn_g);
    grads = with_group(&grads, ParamGroup::Gru, &gru_g);
    if !grads.is_finite() {
        return Err(Error::Numeric("outer gradient is not finite".into()));
    }
    Ok((rows, Some(grads)))
}

/// Trained model, the state it was taken from, and the full history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// SSM state at the best epoch.
    pub ssm: SsmState,
    pub best_epoch: usize,
    pub best_val_mrr: f64,
    pub epochs_run: usize,
    pub history: Vec<HistoryRow>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }

    /// Parameters plus SSM state (prefixed `ssm.`) and run metadata.
    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.meta.insert("seed".into(), seed.to_string());
        ck.meta.insert("best_epoch".into(), self.best_epoch.to_string());
        ck.meta
            .insert("ssm_block".into(), self.ssm.block_size().to_string());
        for (n, t) in self.ssm.states() {
            ck.tensors.push((format!("ssm.{n}"), t.clone()));
        }
        ck
    }
}

/// Index of the first training snapshot and the validation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    /// Snapshots `0..train` are used for training.
    pub train: usize,
    pub total: usize,
}

impl Split {
    pub fn new(total: usize, fraction: f64) -> Self {
        Split {
            train: train_snapshots(total, fraction),
            total,
        }
    }

    /// Targets of the test evaluation: each is predicted from its
    /// predecessor.
    pub fn test_targets(&self) -> Range<usize> {
        self.train..self.total
    }
}

/// Full training run with early stopping on validation MRR.
pub fn train(cfg: &RunConfig, data: &PreparedGraph) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = cfg.model_config(data.node_count());
    let split = Split::new(data.len(), cfg.train_fraction);
    if split.train < 2 || split.train >= data.len() {
        return Err(Error::Config(format!(
            "{} snapshots leave no room for a train/test split",
            data.len()
        )));
    }
    if cfg.delta_t >= split.train {
        return Err(Error::Config(format!(
            "delta_t = {} must be smaller than the {} training snapshots",
            cfg.delta_t, split.train
        )));
    }
    // Windows must leave room for the next-snapshot target inside training.
    let plan = WindowPlan::new(split.train - 1, cfg.delta_t)?;
    let val_target = split
        .test_targets()
        .find(|&t| !data.graph().snapshot(t).positive_pairs().is_empty())
        .ok_or_else(|| Error::Input("no test snapshot has edges for validation".into()))?;

    let mut state = TrainState::new(cfg, &model_cfg)?;
    let mut best = (state.params.clone(), state.ssm.clone(), 0usize);
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        state.epoch = epoch;
        let windows = if cfg.random_window {
            let mut r = rng::stream(cfg.seed, &[rng::purpose::WINDOW, epoch as u64]);
            plan.randomized(&mut r)
        } else {
            plan.windows.clone()
        };
        let start = state.history.len();
        for (i, w) in windows.into_iter().enumerate() {
            let rows = run_window(cfg, &model_cfg, data, &mut state, w, i, None)?;
            state.history.extend(rows);
        }
        let current = Model {
            config: model_cfg.clone(),
            params: state.params.clone(),
        };
        let val = evaluate_with(&current, data, [val_target], cfg.val_k_neg, cfg.seed, rng::purpose::VALIDATION)?.mrr;
        for row in &mut state.history[start..] {
            row.val_mrr = val;
        }
        epochs_run = epoch;
        if val > state.best_val_mrr {
            state.best_val_mrr = val;
            state.epochs_without_improvement = 0;
            best = (state.params.clone(), state.ssm.clone(), epoch);
        } else {
            state.epochs_without_improvement += 1;
            if state.epochs_without_improvement >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: Model {
            config: model_cfg,
            params: best.0,
        },
        ssm: best.1,
        best_epoch: best.2,
        best_val_mrr: state.best_val_mrr,
        epochs_run,
        history: state.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DynamicGraph;
    use crate::walk::{build_cache, WalkConfig};

    #[test]
    fn window_enumeration() {
        let p = WindowPlan::new(10, 8).unwrap();
        assert_eq!(p.windows, vec![0..8, 1..9, 2..10]);
        let p = WindowPlan::new(5, 1).unwrap();
        assert_eq!(p.windows.len(), 5);
        for pair in p.windows.windows(2) {
            assert_eq!(pair[1].start, pair[0].start + 1);
        }
        assert!(WindowPlan::new(3, 4).is_err());
        assert!(WindowPlan::new(3, 0).is_err());
    }

    #[test]
    fn random_windows_stay_within_delta_t() {
        let p = WindowPlan::new(12, 4).unwrap();
        let mut r = rng::stream(1, &[]);
        for w in p.randomized(&mut r) {
            assert!((1..=4).contains(&w.len()));
        }
    }

    fn tiny(snapshots: usize, same: bool) -> PreparedGraph {
        let n = 8;
        let snaps = (0..snapshots)
            .map(|t| {
                let shift = if same { 0 } else { t % 3 };
                let edges: Vec<_> = (0..n - 1)
                    .filter(|i| (i + shift) % 2 == 0)
                    .map(|i| (i, i + 1))
                    .chain([(0, n - 1)])
                    .collect();
                Snapshot::new(t, n, edges, 0..n).unwrap()
            })
            .collect();
        let graph = DynamicGraph::new(snaps, n).unwrap();
        let cache = build_cache(&graph, &WalkConfig::default(), 3).unwrap();
        PreparedGraph::new(graph, cache).unwrap()
    }

    fn small_cfg() -> RunConfig {
        RunConfig {
            feature_dim: 4,
            hidden_dim: 4,
            synth_snapshots: 10,
            delta_t: 3,
            epochs: 3,
            ssm_block: 4,
            ..RunConfig::default()
        }
    }

    #[test]
    fn no_ssm_inner_step_is_plain_gradient_descent() {
        let data = tiny(10, false);
        let cfg = RunConfig {
            no_ssm: true,
            ..small_cfg()
        };
        let model = cfg.model_config(data.node_count());
        let mut state = TrainState::new(&cfg, &model).unwrap();
        let mut steps = 0;
        let mut probe = |s: &InnerStep<'_>| {
            assert!(s.state.is_none());
            for (((_, a), (_, g)), (_, b)) in s.theta_before.iter().zip(s.grads).zip(s.theta_after) {
                let mut expect = a.clone();
                expect.axpy(-cfg.eta, g).unwrap();
                assert_eq!(b, &expect);
            }
            steps += 1;
        };
        run_window(&cfg, &model, &data, &mut state, 0..3, 0, Some(&mut probe)).unwrap();
        assert_eq!(steps, 3);
    }

    #[test]
    fn ssm_inner_step_reads_the_advanced_state() {
        let data = tiny(10, false);
        let cfg = small_cfg();
        let model = cfg.model_config(data.node_count());
        let mut state = TrainState::new(&cfg, &model).unwrap();
        let mut first = true;
        let mut probe = |s: &InnerStep<'_>| {
            let st = s.state.expect("SSM on");
            if first {
                // zero initial state: s_1 = weight · g
                let w = dynamic_weight(s.loss, cfg.weight_eps).unwrap();
                for ((_, g), (_, sv)) in s.grads.iter().zip(st.states()) {
                    for (a, b) in g.data().iter().zip(sv.data()) {
                        assert_eq!(*b, w * a);
                    }
                }
                first = false;
            }
            let expect = apply_ssm_update(s.theta_before, s.grads, st, cfg.eta, SsmMode::Descent).unwrap();
            assert_eq!(s.theta_after, &expect[..]);
        };
        run_window(&cfg, &model, &data, &mut state, 0..2, 0, Some(&mut probe)).unwrap();
    }

    /// Complete graph on 6 nodes minus the matching {0-1, 2-3, 4-5}: every
    /// node has exactly one non-neighbor, so training negatives are forced.
    fn forced_negatives(snapshots: usize) -> PreparedGraph {
        let n = 6;
        let edges: Vec<_> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !(u % 2 == 0 && v == u + 1))
            .collect();
        let snaps = (0..snapshots)
            .map(|t| Snapshot::new(t, n, edges.clone(), 0..n).unwrap())
            .collect();
        let graph = DynamicGraph::new(snaps, n).unwrap();
        let cache = build_cache(&graph, &WalkConfig::default(), 3).unwrap();
        PreparedGraph::new(graph, cache).unwrap()
    }

    #[test]
    fn identical_snapshots_without_ssm_match_reference_descent() {
        let data = forced_negatives(6);
        let cfg = RunConfig {
            no_ssm: true,
            no_global: true,
            eta: 0.05,
            ..small_cfg()
        }
        .resolved();
        let model = cfg.model_config(data.node_count());
        let mut state = TrainState::new(&cfg, &model).unwrap();
        let mut losses = Vec::new();
        let mut probe = |s: &InnerStep<'_>| losses.push(s.loss);
        run_window(&cfg, &model, &data, &mut state, 0..4, 0, Some(&mut probe)).unwrap();

        // Reference: four plain gradient steps on snapshot 0.
        let snap = data.graph().snapshot(0);
        let pos = snap.positive_pairs();
        let neg: Vec<_> = pos.iter().map(|&(u, _)| (u, u ^ 1)).collect();
        let mut params = model.init_params(cfg.seed);
        let mut reference = Vec::new();
        for _ in 0..4 {
            let mut tape = Tape::new();
            let b = bind(&mut tape, &params, |g| g == ParamGroup::Gcn);
            let leaves = group_vars(&b, ParamGroup::Gcn);
            let e = forward(&mut tape, &model, &b, &data.view(0)).unwrap();
            let l = bce_loss(&mut tape, e.local, &pos, &neg).unwrap();
            reference.push(tape.value(l).item().unwrap());
            let theta = group_tensors(&params, ParamGroup::Gcn);
            let mut grads = tape.backward(l).unwrap();
            let g = take_group_grads(&mut grads, &leaves, &theta);
            params = with_group(&params, ParamGroup::Gcn, &plain_step(&theta, &g, cfg.eta).unwrap());
        }
        assert_eq!(losses.len(), 4);
        for (a, b) in losses.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{losses:?} vs {reference:?}");
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0], "{losses:?}");
        }
    }

    #[test]
    fn history_csv_format() {
        let rows = vec![HistoryRow {
            epoch: 1,
            window: 0,
            snapshot: 2,
            loss_fused: 0.5,
            loss_global: None,
            val_mrr: 0.25,
        }];
        assert_eq!(
            history_csv(&rows),
            "epoch,window,snapshot,loss_fused,loss_global,val_mrr\n1,0,2,0.5,,0.25\n"
        );
    }
}
