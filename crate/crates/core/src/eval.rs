//! Link-prediction metrics and the negative-sampling evaluation protocol.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{negative_sample, Snapshot};
use crate::model::{EdgeScorer, Model};
use crate::prepared::PreparedGraph;
use crate::rng;

/// One positive score ranked against sampled negative scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingCase {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

/// `1 + #{greater} + ⌊#{tied}/2⌋`.
pub fn rank_positive(case: &RankingCase) -> usize {
    let mut greater = 0;
    let mut ties = 0;
    for &s in &case.negatives {
        if s > case.positive {
            greater += 1;
        } else if s == case.positive {
            ties += 1;
        }
    }
    1 + greater + ties / 2
}

fn non_empty(cases: &[RankingCase]) -> Result<()> {
    if cases.is_empty() {
        Err(Error::Contract("ranking metrics need at least one case".into()))
    } else {
        Ok(())
    }
}

pub fn mrr(cases: &[RankingCase]) -> Result<f64> {
    non_empty(cases)?;
    Ok(cases.iter().map(|c| 1.0 / rank_positive(c) as f64).sum::<f64>() / cases.len() as f64)
}

pub fn recall_at_k(cases: &[RankingCase], k: usize) -> Result<f64> {
    non_empty(cases)?;
    Ok(cases.iter().filter(|c| rank_positive(c) <= k).count() as f64 / cases.len() as f64)
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve from the Mann–Whitney rank sum with mid-ranks
/// for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let n = scores.len();
    let mut rank_sum = 0.0;
    // Groups come in descending order; ascending 1-based ranks count down.
    let mut above = 0;
    for g in tie_groups(scores) {
        let hi = (n - above) as f64;
        let lo = (n - above - g.len() + 1) as f64;
        let mid = (hi + lo) / 2.0;
        rank_sum += mid * g.iter().filter(|&&i| labels[i]).count() as f64;
        above += g.len();
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Step-wise average precision: `Σ (R_i − R_{i−1}) P_i` over score
/// thresholds, with tied scores forming one threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = class_counts(scores, labels)?;
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for g in tie_groups(scores) {
        let hits = g.iter().filter(|&&i| labels[i]).count();
        tp += hits;
        seen += g.len();
        ap += (hits as f64 / pos as f64) * (tp as f64 / seen as f64);
    }
    Ok(ap)
}

/// Fraction of predictions on the right side of `threshold`
/// (`score ≥ threshold` predicts an edge).
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Contract(format!(
            "accuracy needs equal non-empty inputs, got {} scores and {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let right = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    Ok(right as f64 / scores.len() as f64)
}

/// Threshold used for [`accuracy`] on sigmoid scores.
pub const ACCURACY_THRESHOLD: f64 = 0.5;

/// Metrics for one target snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    pub snapshot: usize,
    pub positives: usize,
    pub mrr: f64,
    pub recall_at_10: f64,
    pub auc: f64,
    pub average_precision: f64,
    pub accuracy: f64,
}

/// Aggregate metrics over all evaluated target snapshots. Field order is
/// the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub k_neg: usize,
    pub positives: usize,
    pub mrr: f64,
    pub recall_at_10: f64,
    pub auc: f64,
    pub average_precision: f64,
    pub accuracy: f64,
    pub snapshots: Vec<SnapshotMetrics>,
    /// Target snapshots without positive edges.
    pub skipped_snapshots: Vec<usize>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn snapshots_csv(&self) -> String {
        let mut out = String::from("snapshot,positives,mrr,recall_at_10,auc,average_precision,accuracy\n");
        for s in &self.snapshots {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.snapshot, s.positives, s.mrr, s.recall_at_10, s.auc, s.average_precision, s.accuracy
            ));
        }
        out
    }
}

/// Ranking cases plus a balanced labelled score set for one target.
#[derive(Debug, Clone, Default)]
struct TargetScores {
    cases: Vec<RankingCase>,
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl TargetScores {
    fn metrics(&self, snapshot: usize) -> Result<SnapshotMetrics> {
        Ok(SnapshotMetrics {
            snapshot,
            positives: self.cases.len(),
            mrr: mrr(&self.cases)?,
            recall_at_10: recall_at_k(&self.cases, 10)?,
            auc: auc(&self.scores, &self.labels)?,
            average_precision: average_precision(&self.scores, &self.labels)?,
            accuracy: accuracy(&self.scores, &self.labels, ACCURACY_THRESHOLD)?,
        })
    }
}

/// Scores every positive pair of `target` with `scorer`. Each source node
/// `u` draws `k_neg` negatives once (its own stream) and all of `u`'s
/// positives are ranked against them; one further negative per positive
/// joins the balanced set used by AUC, AP and accuracy.
fn score_target(scorer: &EdgeScorer, target: &Snapshot, k_neg: usize, seed: u64, purpose: u64) -> Result<TargetScores> {
    let pairs = target.positive_pairs();
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    let t = target.index() as u64;
    let per_source: Vec<Result<TargetScores>> = sources
        .par_iter()
        .map(|&u| {
            let targets: Vec<usize> = pairs.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
            let mut out = TargetScores::default();
            let mut r = rng::stream(seed, &[purpose, t, u as u64]);
            let negatives = match negative_sample(target, u, k_neg, &mut r) {
                Ok(n) => n,
                // u is adjacent to every other active node
                Err(Error::Input(_)) => return Ok(out),
                Err(e) => return Err(e),
            };
            let neg_scores: Vec<f64> = negatives.iter().map(|&v| scorer.score(u, v)).collect();
            for &v in &targets {
                let s = scorer.score(u, v);
                out.cases.push(RankingCase {
                    positive: s,
                    negatives: neg_scores.clone(),
                });
                out.scores.push(s);
                out.labels.push(true);
                let extra = neg_scores[r.gen_range(0..neg_scores.len())];
                out.scores.push(extra);
                out.labels.push(false);
            }
            Ok(out)
        })
        .collect();
    let mut all = TargetScores::default();
    for part in per_source {
        let part = part?;
        all.cases.extend(part.cases);
        all.scores.extend(part.scores);
        all.labels.extend(part.labels);
    }
    Ok(all)
}

/// Evaluates `model` on each target snapshot `t` in `targets`, using the
/// fused embeddings of snapshot `t − 1`. Metrics are pooled over all
/// positives; targets without positives are listed as skipped.
pub fn evaluate(
    model: &Model,
    data: &PreparedGraph,
    targets: impl IntoIterator<Item = usize>,
    k_neg: usize,
    seed: u64,
) -> Result<MetricsReport> {
    evaluate_with(model, data, targets, k_neg, seed, rng::purpose::EVALUATION)
}

pub(crate) fn evaluate_with(
    model: &Model,
    data: &PreparedGraph,
    targets: impl IntoIterator<Item = usize>,
    k_neg: usize,
    seed: u64,
    purpose: u64,
) -> Result<MetricsReport> {
    if k_neg == 0 {
        return Err(Error::Config("k_neg must be >= 1".into()));
    }
    let mut pooled = TargetScores::default();
    let mut snapshots = Vec::new();
    let mut skipped = Vec::new();
    for t in targets {
        if t == 0 || t >= data.len() {
            return Err(Error::Contract(format!(
                "target snapshot {t} needs a predecessor inside 1..{}",
                data.len()
            )));
        }
        let target = data.graph().snapshot(t);
        if target.positive_pairs().is_empty() {
            skipped.push(t);
            continue;
        }
        let scorer = model.predict_next(data, t - 1)?;
        let scores = score_target(&scorer, target, k_neg, seed, purpose)?;
        if scores.cases.is_empty() {
            skipped.push(t);
            continue;
        }
        snapshots.push(scores.metrics(t)?);
        pooled.cases.extend(scores.cases);
        pooled.scores.extend(scores.scores);
        pooled.labels.extend(scores.labels);
    }
    if pooled.cases.is_empty() {
        return Err(Error::Input("no target snapshot has positive edges to evaluate".into()));
    }
    let all = pooled.metrics(usize::MAX)?;
    Ok(MetricsReport {
        seed,
        k_neg,
        positives: all.positives,
        mrr: all.mrr,
        recall_at_10: all.recall_at_10,
        auc: all.auc,
        average_precision: all.average_precision,
        accuracy: all.accuracy,
        snapshots,
        skipped_snapshots: skipped,
    })
}

/// Expected MRR when the positive's rank is uniform on `1..=k+1`:
/// `H_{k+1} / (k+1)`.
pub fn uniform_mrr(k: usize) -> f64 {
    let n = k + 1;
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}

/// Monte-Carlo estimate of the MRR of a scorer that ranks at random
/// against `k` negatives.
pub fn uniform_mrr_monte_carlo(k: usize, trials: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[rng::purpose::EVALUATION, u64::MAX]);
    let cases: Vec<RankingCase> = (0..trials.max(1))
        .map(|_| RankingCase {
            positive: r.gen(),
            negatives: (0..k).map(|_| r.gen()).collect(),
        })
        .collect();
    mrr(&cases).expect("at least one trial")
}
