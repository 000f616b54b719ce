//! Ranking, classification and interpretation measures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explainer::InterpretationSubgraph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("k = {k} exceeds list length {n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("both classes need at least one score")]
    EmptyClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no ground truth for method {0}")]
    MissingTruth(String),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn top(rel: &[bool], k: usize) -> Result<&[bool]> {
    if k > rel.len() {
        return Err(MetricsError::KOutOfRange { k, n: rel.len() });
    }
    Ok(&rel[..k])
}

/// Average precision over the top `k`: the mean of precision@i over the
/// relevant positions i.
pub fn map_at_k(rel: &[bool], k: usize) -> Result<f64> {
    let (mut hits, mut sum) = (0usize, 0.0);
    for (i, &r) in top(rel, k)?.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(if hits == 0 { 0.0 } else { sum / hits as f64 })
}

fn dcg(rel: &[bool]) -> f64 {
    rel.iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum()
}

/// DCG of the top `k` over DCG of the same items sorted relevant-first.
pub fn ndcg_at_k(rel: &[bool], k: usize) -> Result<f64> {
    let t = top(rel, k)?;
    let hits = t.iter().filter(|&&r| r).count();
    if hits == 0 {
        return Ok(0.0);
    }
    let ideal: Vec<bool> = (0..k).map(|i| i < hits).collect();
    Ok(dcg(t) / dcg(&ideal))
}

/// 1-based rank of the first relevant item in the top `k`.
pub fn fr_at_k(rel: &[bool], k: usize) -> Result<Option<usize>> {
    Ok(top(rel, k)?.iter().position(|&r| r).map(|i| i + 1))
}

/// Mean 1-based rank of the relevant items in the top `k`.
pub fn ar_at_k(rel: &[bool], k: usize) -> Result<Option<f64>> {
    let ranks: Vec<usize> = top(rel, k)?
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| i + 1)
        .collect();
    Ok((!ranks.is_empty()).then(|| ranks.iter().sum::<usize>() as f64 / ranks.len() as f64))
}

/// Probability that a random positive outscores a random negative, ties
/// counting half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    let mut n = neg.to_vec();
    n.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in pos {
        let below = n.partition_point(|&x| x < p);
        let upto = n.partition_point(|&x| x <= p);
        wins += below as f64 + 0.5 * (upto - below) as f64;
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn precision_recall_f1(predicted: &[bool], truth: &[bool]) -> Result<Prf> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), truth.len()));
    }
    let count = |p: bool, t: bool| predicted.iter().zip(truth).filter(|&(&a, &b)| a == p && b == t).count() as f64;
    let (tp, fp, fn_) = (count(true, true), count(true, false), count(false, true));
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(Prf {
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    })
}

/// Statements that fixed a vulnerable method: those deleted or modified by
/// the fix, and those depending on a line the fix added.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixGroundTruth {
    pub method: String,
    pub deleted_or_modified: BTreeSet<usize>,
    pub added_dependents: BTreeSet<usize>,
}

impl FixGroundTruth {
    pub fn statements(&self) -> BTreeSet<usize> {
        self.deleted_or_modified.union(&self.added_dependents).copied().collect()
    }
}

fn truth_map(truths: &[FixGroundTruth]) -> BTreeMap<&str, &FixGroundTruth> {
    truths.iter().map(|t| (t.method.as_str(), t)).collect()
}

/// Share of sub-graphs whose top `num_nodes` statements touch the fix.
pub fn interp_accuracy(subgraphs: &[InterpretationSubgraph], truths: &[FixGroundTruth], num_nodes: usize) -> Result<f64> {
    if subgraphs.is_empty() {
        return Ok(0.0);
    }
    let by_id = truth_map(truths);
    let mut correct = 0;
    for s in subgraphs {
        let t = by_id.get(s.method.as_str()).ok_or_else(|| MetricsError::MissingTruth(s.method.clone()))?;
        let hit = s
            .statement_ranking
            .iter()
            .take(num_nodes)
            .any(|(i, _)| t.deleted_or_modified.contains(i) || t.added_dependents.contains(i));
        correct += usize::from(hit);
    }
    Ok(correct as f64 / subgraphs.len() as f64)
}

/// Mean first and mean average rank of fix statements within each
/// statement ranking. Methods where no fix statement was selected are
/// left out; `None` when that leaves nothing.
pub fn mfr_mar(subgraphs: &[InterpretationSubgraph], truths: &[FixGroundTruth]) -> (Option<f64>, Option<f64>) {
    let by_id = truth_map(truths);
    let (mut frs, mut ars) = (Vec::new(), Vec::new());
    for s in subgraphs {
        let Some(t) = by_id.get(s.method.as_str()) else { continue };
        let fix = t.statements();
        let ranks: Vec<usize> = s
            .statement_ranking
            .iter()
            .enumerate()
            .filter(|(_, (i, _))| fix.contains(i))
            .map(|(r, _)| r + 1)
            .collect();
        if let Some(&first) = ranks.first() {
            frs.push(first as f64);
            ars.push(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (mean(&frs), mean(&ars))
}

/// Cut-offs reported in evaluation reports.
pub const REPORT_KS: [usize; 6] = [1, 3, 5, 10, 15, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingAtK {
    pub k: usize,
    pub map: f64,
    pub ndcg: f64,
    pub fr: Option<usize>,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: usize,
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One entry per cut-off no longer than the ranked list.
    pub ranking: Vec<RankingAtK>,
    pub interpretation_accuracy: Option<f64>,
    pub mfr: Option<f64>,
    pub mar: Option<f64>,
}

/// Report over a ranked list. `ranked` is `(score, predicted V, truly V)`
/// in rank order.
pub fn evaluate(
    ranked: &[(f64, bool, bool)],
    subgraphs: &[InterpretationSubgraph],
    truths: &[FixGroundTruth],
    num_nodes: usize,
) -> Result<EvalReport> {
    let rel: Vec<bool> = ranked.iter().map(|r| r.2).collect();
    let pred: Vec<bool> = ranked.iter().map(|r| r.1).collect();
    let pos: Vec<f64> = ranked.iter().filter(|r| r.2).map(|r| r.0).collect();
    let neg: Vec<f64> = ranked.iter().filter(|r| !r.2).map(|r| r.0).collect();
    let prf = precision_recall_f1(&pred, &rel)?;
    let ranking = REPORT_KS
        .iter()
        .filter(|&&k| k <= rel.len())
        .map(|&k| {
            Ok(RankingAtK {
                k,
                map: map_at_k(&rel, k)?,
                ndcg: ndcg_at_k(&rel, k)?,
                fr: fr_at_k(&rel, k)?,
                ar: ar_at_k(&rel, k)?,
            })
        })
        .collect::<Result<_>>()?;
    let (mfr, mar) = mfr_mar(subgraphs, truths);
    Ok(EvalReport {
        methods: ranked.len(),
        auc: auc(&pos, &neg).ok(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        ranking,
        interpretation_accuracy: if subgraphs.is_empty() {
            None
        } else {
            Some(interp_accuracy(subgraphs, truths, num_nodes)?)
        },
        mfr,
        mar,
    })
}
