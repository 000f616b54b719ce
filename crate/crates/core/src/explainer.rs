//! Edge-mask explanations: learn a soft mask over a method's PDG edges that
//! keeps the model's decision, then keep the strongest edges.

use std::collections::{BTreeMap, BTreeSet};

use pdgvd_autodiff::{sigmoid, ParamStore, Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::frontend::{export_dot, EdgeKind, FrontendError, Highlight, Pdg, PdgEdge};
use crate::model::{forward_with, nll, Decision, DetectionModel, EdgeGates, MethodInput, ModelError, Result, StaticFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    /// Weight of the mask-size penalty.
    pub lambda_size: f64,
    /// Weight of the mask-entropy penalty.
    pub lambda_entropy: f64,
    pub iterations: usize,
    pub lr: f64,
    pub init_logit: f64,
    /// Edges kept in the interpretation sub-graph.
    pub k: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            lambda_size: 0.005,
            lambda_entropy: 0.1,
            iterations: 300,
            lr: 0.05,
            init_logit: 1.0,
            k: 5,
        }
    }
}

/// Logits aligned with the PDG's edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMask {
    pub logits: Vec<f64>,
}

impl EdgeMask {
    pub fn values(&self) -> Vec<f64> {
        self.logits.iter().map(|&m| sigmoid(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: String,
    pub var: Option<String>,
    pub mask: f64,
}

impl KeptEdge {
    pub fn edge(&self) -> PdgEdge {
        PdgEdge {
            src: self.src,
            dst: self.dst,
            kind: if self.kind == "data" { EdgeKind::Data } else { EdgeKind::Control },
            var: self.var.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationSubgraph {
    pub method: String,
    pub k: usize,
    pub edges: Vec<KeptEdge>,
    /// Endpoints of the kept edges, ascending.
    pub nodes: Vec<usize>,
    /// `(statement, importance)`, most important first.
    pub statement_ranking: Vec<(usize, f64)>,
}

impl InterpretationSubgraph {
    pub fn highlight(&self) -> Highlight {
        Highlight {
            nodes: self.nodes.iter().copied().collect(),
            edges: self.edges.iter().map(KeptEdge::edge).collect(),
        }
    }

    pub fn to_dot(&self, g: &Pdg) -> Result<String, FrontendError> {
        export_dot(g, Some(&self.highlight()))
    }
}

/// The `k` highest-mask edges (ties by edge order), their endpoints, and
/// statements ranked by the summed mask of their kept edges.
pub fn extract_subgraph(g: &Pdg, method: &str, mask: &EdgeMask, k: usize) -> InterpretationSubgraph {
    let values = mask.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    let mut importance: BTreeMap<usize, f64> = BTreeMap::new();
    let mut edges = Vec::with_capacity(order.len());
    for e in order {
        let edge = &g.edges[e];
        for node in BTreeSet::from([edge.src, edge.dst]) {
            *importance.entry(node).or_default() += values[e];
        }
        edges.push(KeptEdge {
            src: edge.src,
            dst: edge.dst,
            kind: edge.kind.as_str().to_string(),
            var: edge.var.clone(),
            mask: values[e],
        });
    }
    let nodes = importance.keys().copied().collect();
    let mut statement_ranking: Vec<(usize, f64)> = importance.into_iter().collect();
    statement_ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    InterpretationSubgraph {
        method: method.to_string(),
        k,
        edges,
        nodes,
        statement_ranking,
    }
}

/// A frozen model and one method, with the edge-independent features
/// computed once.
pub struct Explainer<'a> {
    model: &'a DetectionModel,
    input: MethodInput,
    statics: [Tensor; 4],
}

impl<'a> Explainer<'a> {
    pub fn new(model: &'a DetectionModel, g: &Pdg) -> Result<Self> {
        let input = model.prepare(g);
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape, false);
        let statics = StaticFeatures::compute(&mut tape, &p, &input)?.values(&tape);
        Ok(Explainer { model, input, statics })
    }

    pub fn edge_count(&self) -> usize {
        self.input.edge_count()
    }

    fn probabilities(&self, gates: &dyn Fn(&mut Tape) -> EdgeGates) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let p = self.model.params.bind(&mut tape, false);
        let statics = StaticFeatures::from_values(&mut tape, &self.statics);
        let g = gates(&mut tape);
        let out = forward_with(&mut tape, &p, &self.input, statics, &g)?;
        let d = tape.value(out).data();
        Ok([d[0], d[1]])
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.edge_count() {
            return Err(ModelError::MaskMisaligned {
                expected: self.edge_count(),
                got: len,
            });
        }
        Ok(())
    }

    /// Class distribution with every edge scaled by its mask value.
    pub fn masked_forward(&self, mask: &EdgeMask) -> Result<[f64; 2]> {
        self.check(mask.logits.len())?;
        let logits = Tensor::vector(mask.logits.clone());
        self.probabilities(&|t: &mut Tape| EdgeGates::Soft(t.constant(logits.clone())))
    }

    /// `P(V)` with only the `keep` edges present.
    pub fn kept_score(&self, keep: &[bool]) -> Result<f64> {
        self.check(keep.len())?;
        let g: Vec<f64> = keep.iter().map(|&k| f64::from(u8::from(k))).collect();
        Ok(self.probabilities(&|_: &mut Tape| EdgeGates::Hard(g.clone()))?[1])
    }

    pub fn full_score(&self) -> Result<f64> {
        Ok(self.probabilities(&|_: &mut Tape| EdgeGates::Full)?[1])
    }

    /// Minimises `-log P(target | masked graph)` plus size and entropy
    /// penalties on the mask values, with Adam on the logits. Returns the
    /// final mask and the loss at each iteration.
    pub fn learn_edge_mask(&self, target: Decision, cfg: &ExplainerConfig) -> Result<(EdgeMask, Vec<f64>)> {
        let e = self.edge_count();
        if e == 0 {
            return Ok((EdgeMask { logits: vec![] }, vec![]));
        }
        let mut store = ParamStore::new();
        store.insert("mask", Tensor::full(&[e], cfg.init_logit))?;
        let mut losses = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            let mut tape = Tape::new();
            let p = self.model.params.bind(&mut tape, false);
            let m = store.bind(&mut tape, true).get("mask")?;
            let statics = StaticFeatures::from_values(&mut tape, &self.statics);
            let probs = forward_with(&mut tape, &p, &self.input, statics, &EdgeGates::Soft(m))?;
            let fit = nll(&mut tape, probs, target == Decision::V)?;
            let s = tape.sigmoid(m);
            let size = tape.sum(s);
            // binary entropy from log-sigmoids: -(s log s + (1 - s) log(1 - s))
            let log_s = tape.log(s);
            let neg_m = tape.neg(m);
            let s_neg = tape.sigmoid(neg_m);
            let log_1s = tape.log(s_neg);
            let a = tape.mul(s, log_s)?;
            let b = tape.mul(s_neg, log_1s)?;
            let ab = tape.add(a, b)?;
            let ent = tape.sum(ab);
            let ent = tape.neg(ent);
            let size = tape.scale(size, cfg.lambda_size);
            let ent = tape.scale(ent, cfg.lambda_entropy);
            let reg = tape.add(size, ent)?;
            let loss = tape.add(fit, reg)?;
            losses.push(tape.value(loss).data()[0]);
            let grads = tape.backward(loss)?;
            store.zero_grad();
            grads.accumulate_into(&mut store);
            store.adam_step(cfg.lr)?;
        }
        let logits = store.get("mask")?.data().to_vec();
        Ok((EdgeMask { logits }, losses))
    }
}

pub const BRUTE_FORCE_MAX_EDGES: usize = 16;

/// Exhaustive search over `min(k, |E|)`-edge subsets for the one whose
/// kept-only score is closest to the full score (first in lexicographic
/// order on ties). Returns the subset and its score gap.
pub fn brute_force_minimal_subgraph(ex: &Explainer<'_>, k: usize) -> Result<(Vec<usize>, f64)> {
    let e = ex.edge_count();
    if e > BRUTE_FORCE_MAX_EDGES {
        return Err(ModelError::TooManyEdges {
            max: BRUTE_FORCE_MAX_EDGES,
            got: e,
        });
    }
    let full = ex.full_score()?;
    let k = k.min(e);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for bits in 0u32..(1 << e) {
        if bits.count_ones() as usize != k {
            continue;
        }
        let keep: Vec<bool> = (0..e).map(|i| bits >> i & 1 == 1).collect();
        let gap = (full - ex.kept_score(&keep)?).abs();
        let subset: Vec<usize> = (0..e).filter(|&i| keep[i]).collect();
        let better = match &best {
            None => true,
            Some((s, g)) => gap < *g || (gap == *g && subset < *s),
        };
        if better {
            best = Some((subset, gap));
        }
    }
    Ok(best.expect("at least the empty subset"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub method: String,
    pub decision: Decision,
    pub score: f64,
    pub k: usize,
    pub edges: Vec<KeptEdge>,
    pub statements: Vec<StatementImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementImportance {
    pub stmt: usize,
    pub importance: f64,
}

/// Explains the model's own decision on `g`.
pub fn explain(model: &DetectionModel, g: &Pdg, method: &str, cfg: &ExplainerConfig) -> Result<(ExplanationReport, InterpretationSubgraph)> {
    let ex = Explainer::new(model, g)?;
    let score = ex.full_score()?;
    let decision = model.decide(score);
    let (mask, _) = ex.learn_edge_mask(decision, cfg)?;
    let sub = extract_subgraph(g, method, &mask, cfg.k);
    let report = ExplanationReport {
        method: method.to_string(),
        decision,
        score,
        k: cfg.k,
        edges: sub.edges.clone(),
        statements: sub
            .statement_ranking
            .iter()
            .map(|&(stmt, importance)| StatementImportance { stmt, importance })
            .collect(),
    };
    Ok((report, sub))
}

impl ExplanationReport {
    pub fn subgraph(&self) -> InterpretationSubgraph {
        let nodes: BTreeSet<usize> = self.edges.iter().flat_map(|e| [e.src, e.dst]).collect();
        InterpretationSubgraph {
            method: self.method.clone(),
            k: self.k,
            edges: self.edges.clone(),
            nodes: nodes.into_iter().collect(),
            statement_ranking: self.statements.iter().map(|s| (s.stmt, s.importance)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn chain() -> Pdg {
        // five data edges: 0->1 a, 0->2 a, 1->3 b, 2->3 c, 3->4 d
        parse_source("void f(){ a = 1; b = a; c = a; d = b + c; e = d; }").unwrap().remove(0)
    }

    #[test]
    fn extraction_by_hand() {
        let g = chain();
        assert_eq!(g.edges.len(), 5);
        let logits: Vec<f64> = [0.9, 0.2, 0.7, 0.7, 0.1].iter().map(|&p: &f64| (p / (1.0 - p)).ln()).collect();
        let s = extract_subgraph(&g, "f", &EdgeMask { logits }, 3);
        let kept: Vec<(usize, usize)> = s.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(kept, [(0, 1), (1, 3), (2, 3)]);
        assert_eq!(s.nodes, [0, 1, 2, 3]);
        let order: Vec<usize> = s.statement_ranking.iter().map(|r| r.0).collect();
        // 1: 0.9 + 0.7, 3: 0.7 + 0.7, 0: 0.9, 2: 0.7
        assert_eq!(order, [1, 3, 0, 2]);
    }

    #[test]
    fn extraction_limits() {
        let g = chain();
        let mask = EdgeMask { logits: vec![0.0, 3.0, 0.0, 0.0, 0.0] };
        assert_eq!(extract_subgraph(&g, "f", &mask, 10).edges.len(), 5);
        let one = extract_subgraph(&g, "f", &mask, 1);
        assert_eq!((one.edges[0].src, one.edges[0].dst), (0, 2));
        assert_eq!(one.nodes, [0, 2]);
    }
}
