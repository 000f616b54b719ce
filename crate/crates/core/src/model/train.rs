use std::cmp::Ordering;

use pdgvd_autodiff::{seeded, ParamStore, Tape};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward, nll, DetectionModel, EdgeGates, MethodInput, ModelError, Result};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Decision {
    V,
    NV,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Methods per optimiser step; gradients are averaged over the batch.
    pub batch_size: usize,
    /// Epochs without a better tuning AUC before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 8,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub input: MethodInput,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub tuning_auc: Option<f64>,
}

/// Equal numbers of each class: a seeded shuffle, then the first
/// `min(|V|, |NV|)` of each class in original order.
pub fn balance<T: Clone>(items: &[T], is_vulnerable: impl Fn(&T) -> bool, seed: u64) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeded(seed));
    let pos = items.iter().filter(|x| is_vulnerable(x)).count();
    let keep = pos.min(items.len() - pos);
    let (mut kp, mut kn) = (0, 0);
    let mut chosen = vec![false; items.len()];
    for i in order {
        let c = if is_vulnerable(&items[i]) { &mut kp } else { &mut kn };
        if *c < keep {
            *c += 1;
            chosen[i] = true;
        }
    }
    items
        .iter()
        .zip(chosen)
        .filter(|(_, c)| *c)
        .map(|(x, _)| x.clone())
        .collect()
}

fn example_grad(model: &DetectionModel, ex: &Example) -> Result<(f64, pdgvd_autodiff::Gradients)> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, true);
    let probs = forward(&mut tape, &p, &ex.input, &EdgeGates::Full)?;
    let loss = nll(&mut tape, probs, ex.vulnerable)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).data()[0], grads))
}

/// Scores for a set of examples, computed in parallel, in input order.
pub(crate) fn scores(model: &DetectionModel, xs: &[Example]) -> Result<Vec<f64>> {
    xs.par_iter().map(|e| model.score_input(&e.input)).collect()
}

fn tuning_auc(model: &DetectionModel, tune: &[Example]) -> Result<Option<f64>> {
    let s = scores(model, tune)?;
    let pos: Vec<f64> = s.iter().zip(tune).filter(|(_, e)| e.vulnerable).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = s.iter().zip(tune).filter(|(_, e)| !e.vulnerable).map(|(s, _)| *s).collect();
    Ok(metrics::auc(&pos, &neg).ok())
}

/// Adam on the balanced training set with cross-entropy loss, early
/// stopping on tuning AUC. The best parameters seen are kept.
pub fn train(model: &mut DetectionModel, train: &[Example], tune: &[Example], cfg: &TrainConfig) -> Result<Vec<EpochLog>> {
    if train.is_empty() {
        return Err(ModelError::EmptySplit("training"));
    }
    let train = balance(train, |e| e.vulnerable, cfg.seed);
    if train.is_empty() {
        return Err(ModelError::EmptySplit("balanced training"));
    }
    let mut rng = seeded(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = Vec::new();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    let batch_size = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let results: Vec<_> = chunk.par_iter().map(|&i| example_grad(model, &train[i])).collect();
            model.params.zero_grad();
            for r in results {
                let (loss, grads) = r?;
                total += loss;
                grads.accumulate_into(&mut model.params);
            }
            model.params.scale_grads(1.0 / chunk.len() as f64);
            model.params.adam_step(cfg.lr)?;
        }
        let auc = tuning_auc(model, tune)?;
        let loss = total / train.len() as f64;
        log.push(EpochLog {
            epoch,
            loss,
            tuning_auc: auc,
        });
        // Without a two-class tuning set, the training loss stands in.
        let quality = auc.unwrap_or(-loss);
        if best.as_ref().map_or(true, |(b, _)| quality > *b) {
            best = Some((quality, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(log)
}

/// The threshold maximising F1 over the midpoints between consecutive
/// distinct tuning scores (smaller threshold on ties). Returns `(tau, F1)`.
pub fn fit_threshold(scored: &[(f64, bool)]) -> Result<(f64, f64)> {
    let pos = scored.iter().filter(|(_, v)| *v).count();
    if pos == 0 || pos == scored.len() {
        return Err(ModelError::SingleClassTuningSet);
    }
    let mut distinct: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let candidates: Vec<f64> = if distinct.len() == 1 {
        distinct
    } else {
        distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
    };
    let f1_at = |tau: f64| {
        let pred: Vec<bool> = scored.iter().map(|(s, _)| *s >= tau).collect();
        let truth: Vec<bool> = scored.iter().map(|(_, v)| *v).collect();
        metrics::precision_recall_f1(&pred, &truth).expect("aligned").f1
    };
    let mut best = (candidates[0], f1_at(candidates[0]));
    for &tau in &candidates[1..] {
        let f = f1_at(tau);
        if f > best.1 {
            best = (tau, f);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDetection {
    pub method: String,
    pub score: f64,
    pub decision: Decision,
    pub rank: usize,
}

/// Descending by score, ties by id; decisions against `threshold`.
pub fn rank_methods(scored: &[(String, f64)], threshold: f64) -> Vec<RankedDetection> {
    let mut v: Vec<&(String, f64)> = scored.iter().collect();
    v.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    v.into_iter()
        .enumerate()
        .map(|(i, (id, s))| RankedDetection {
            method: id.clone(),
            score: *s,
            decision: if *s >= threshold { Decision::V } else { Decision::NV },
            rank: i + 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_drops_the_surplus() {
        let items: Vec<(usize, bool)> = (0..11).map(|i| (i, i % 3 == 0)).collect();
        let b = balance(&items, |x| x.1, 4);
        assert_eq!(b.iter().filter(|x| x.1).count(), 4);
        assert_eq!(b.iter().filter(|x| !x.1).count(), 4);
        assert_eq!(b, balance(&items, |x| x.1, 4));
    }

    #[test]
    fn threshold_cases() {
        assert_eq!(fit_threshold(&[(0.1, false), (0.9, true)]).unwrap(), (0.5, 1.0));
        let same = fit_threshold(&[(0.4, false), (0.4, true)]).unwrap();
        assert_eq!(same.0, 0.4);
        assert!(matches!(fit_threshold(&[(0.4, true)]), Err(ModelError::SingleClassTuningSet)));
    }

    #[test]
    fn threshold_matches_exhaustive_search() {
        let pts = [(0.15, false), (0.3, true), (0.45, false), (0.6, true), (0.75, false), (0.9, true)];
        let (tau, f) = fit_threshold(&pts).unwrap();
        // every cut between sorted points, by hand: predict V for the top j
        let mut best = (f64::NAN, -1.0);
        let sorted: Vec<f64> = pts.iter().map(|p| p.0).collect();
        for j in 1..sorted.len() {
            let cut = (sorted[j - 1] + sorted[j]) / 2.0;
            let tp = pts.iter().filter(|p| p.0 >= cut && p.1).count() as f64;
            let fp = pts.iter().filter(|p| p.0 >= cut && !p.1).count() as f64;
            let f1 = 2.0 * tp / (2.0 * tp + fp + (3.0 - tp));
            if f1 > best.1 {
                best = (cut, f1);
            }
        }
        assert_eq!(tau, best.0);
        assert!((f - best.1).abs() < 1e-12);
    }

    #[test]
    fn ranking_rules() {
        let r = rank_methods(&[("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.9)], 0.5);
        let ids: Vec<&str> = r.iter().map(|d| d.method.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(r[2].rank, 3);
        assert_eq!(r[1].decision, Decision::V);
        assert!(rank_methods(&[], 0.5).is_empty());
    }
}
