//! The detection model: statement vectors from the encoders, two graph
//! convolutions over the PDG, pyramid pooling and a small classifier.

pub mod check;
mod gating;
mod train;

use std::io::{Read, Write};

use pdgvd_autodiff::{checkpoint, seeded, Bound, ParamStore, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::encoders::{self, EncoderConfig, TreeBatch};
use crate::features::{
    build_label_vocabulary, build_token_vocabulary, method_features, vectorize, FeatureConfig, StatementFeatures,
    Vocabulary,
};
use crate::frontend::{EdgeKind, FrontendError, Pdg};

pub use gating::EdgeGates;
pub use train::{
    balance, fit_threshold, rank_methods, train, Decision, EpochLog, Example, RankedDetection, TrainConfig,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("tuning set must contain both classes")]
    SingleClassTuningSet,
    #[error("edge mask has {got} entries but the graph has {expected} edges")]
    MaskMisaligned { expected: usize, got: usize },
    #[error("brute force handles at most {max} edges, got {got}")]
    TooManyEdges { max: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Pooling levels; the pooled width is `gcn_dim * (1 + 2 + 4)`.
pub const PYRAMID_LEVELS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub features: FeatureConfig,
    pub gcn_dim: usize,
    pub fc_hidden: [usize; 2],
    /// Sub-tokens and AST labels seen fewer times than this map to `<unk>`.
    pub min_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            features: FeatureConfig::default(),
            gcn_dim: 64,
            fc_hidden: [64, 32],
            min_count: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate().map_err(ModelError::Config)?;
        if self.gcn_dim < 1 || self.fc_hidden.contains(&0) {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        self.gcn_dim * PYRAMID_LEVELS.iter().sum::<usize>()
    }
}

fn init_params(cfg: &ModelConfig, n_tokens: usize, n_labels: usize, seed: u64) -> Result<ParamStore> {
    let e = &cfg.encoder;
    let mut rng = seeded(seed);
    let mut s = ParamStore::new();
    let bound = 1.0 / (e.embed_dim as f64).sqrt();
    s.insert_uniform("emb.tok", &[n_tokens, e.embed_dim], bound, &mut rng)?;
    s.insert_uniform("emb.ast", &[n_labels, e.embed_dim], bound, &mut rng)?;
    for name in ["gru.stmt", "gru.names", "gru.types"] {
        encoders::init_gru(&mut s, name, e.embed_dim, e.gru_hidden, &mut rng)?;
    }
    encoders::init_tree_lstm(&mut s, "tree", e.embed_dim, e.tree_hidden, &mut rng)?;
    for name in ["gru.data", "gru.ctrl"] {
        encoders::init_gru(&mut s, name, e.gru_hidden, e.gru_hidden, &mut rng)?;
    }
    encoders::init_attention(&mut s, "att", e.gru_hidden, e.attn_hidden, &mut rng)?;
    encoders::init_fusion(&mut s, "fuse", e, &mut rng)?;
    s.insert_glorot("gcn.W1", e.stmt_dim, cfg.gcn_dim, &mut rng)?;
    s.insert_glorot("gcn.W2", cfg.gcn_dim, cfg.gcn_dim, &mut rng)?;
    let widths = [cfg.pooled_dim(), cfg.fc_hidden[0], cfg.fc_hidden[1], 2];
    for (k, w) in widths.windows(2).enumerate() {
        s.insert_glorot(&format!("fc{}.W", k + 1), w[0], w[1], &mut rng)?;
        s.insert_zeros(&format!("fc{}.b", k + 1), &[1, w[1]])?;
    }
    Ok(s)
}

/// Step-major ids and mask for one batch row per statement.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Seqs {
    ids: Vec<usize>,
    mask: Vec<u8>,
}

impl Seqs {
    fn new(rows: &[Vec<String>], vocab: &Vocabulary, max_len: usize) -> Self {
        let n = rows.len();
        let mut ids = vec![0; max_len * n];
        let mut mask = vec![0; max_len * n];
        for (i, r) in rows.iter().enumerate() {
            let (ri, rm) = vectorize(r, vocab, max_len);
            for t in 0..max_len {
                ids[t * n + i] = ri[t];
                mask[t * n + i] = rm[t];
            }
        }
        Seqs { ids, mask }
    }
}

/// Neighbour sequences for the context encoders, step-major.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Context {
    steps: usize,
    /// Source statement per (step, row); 0 where the row has run out.
    rows: Vec<usize>,
    live: Vec<u8>,
    /// `(edge, step * n + row)` for every edge joining a row to its
    /// neighbour at that step.
    targets: Vec<(usize, usize)>,
}

impl Context {
    fn new(g: &Pdg, ctx: &[&[usize]], kind: EdgeKind) -> Self {
        let n = ctx.len();
        let steps = ctx.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut rows = vec![0; steps * n];
        let mut live = vec![0; steps * n];
        let mut targets = Vec::new();
        for (i, c) in ctx.iter().enumerate() {
            for (t, &j) in c.iter().enumerate() {
                rows[t * n + i] = j;
                live[t * n + i] = 1;
                for (e, edge) in g.edges.iter().enumerate() {
                    let joins = (edge.src == i && edge.dst == j) || (edge.src == j && edge.dst == i);
                    if edge.kind == kind && joins {
                        targets.push((e, t * n + i));
                    }
                }
            }
        }
        Context { steps, rows, live, targets }
    }
}

/// Everything the forward pass needs from one method, vectorised once.
#[derive(Debug, Clone)]
pub struct MethodInput {
    n: usize,
    edge_count: usize,
    stmt: Seqs,
    names: Seqs,
    types: Seqs,
    trees: TreeBatch,
    data_ctx: Context,
    ctrl_ctx: Context,
    /// `(edge, i * n + j)` in both directions for every non-loop edge.
    window: Vec<(usize, usize)>,
}

impl MethodInput {
    pub fn new(g: &Pdg, feats: &[StatementFeatures], cfg: &FeatureConfig, tokens: &Vocabulary, labels: &Vocabulary) -> Self {
        let n = g.len();
        let flat = |lists: &[Vec<String>]| -> Vec<String> { lists.iter().flatten().cloned().collect() };
        let stmt: Vec<Vec<String>> = feats.iter().map(|f| f.subtokens.clone()).collect();
        let names: Vec<Vec<String>> = feats.iter().map(|f| flat(&f.var_names)).collect();
        let types: Vec<Vec<String>> = feats.iter().map(|f| flat(&f.var_types)).collect();
        let trees: Vec<Option<&crate::frontend::Ast>> = feats.iter().map(|f| f.ast.as_ref()).collect();
        let data: Vec<&[usize]> = feats.iter().map(|f| f.data_ctx.as_slice()).collect();
        let ctrl: Vec<&[usize]> = feats.iter().map(|f| f.ctrl_ctx.as_slice()).collect();
        let mut window = Vec::new();
        for (e, edge) in g.edges.iter().enumerate() {
            if edge.src != edge.dst {
                window.push((e, edge.src * n + edge.dst));
                window.push((e, edge.dst * n + edge.src));
            }
        }
        MethodInput {
            n,
            edge_count: g.edges.len(),
            stmt: Seqs::new(&stmt, tokens, cfg.max_subtokens),
            names: Seqs::new(&names, tokens, cfg.max_var_tokens),
            types: Seqs::new(&types, tokens, cfg.max_var_tokens),
            trees: TreeBatch::new(&trees, labels),
            data_ctx: Context::new(g, &data, EdgeKind::Data),
            ctrl_ctx: Context::new(g, &ctrl, EdgeKind::Control),
            window,
        }
    }

    pub fn statements(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }
}

/// The edge-independent statement features: sub-token, AST, name and type
/// encodings, each `[n, gru_hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct StaticFeatures {
    pub stmt: Var,
    pub ast: Var,
    pub names: Var,
    pub types: Var,
}

impl StaticFeatures {
    pub fn compute(tape: &mut Tape, p: &Bound, x: &MethodInput) -> Result<Self, TensorError> {
        Ok(StaticFeatures {
            stmt: encoders::gru_encode_batch(tape, p, "gru.stmt", "emb.tok", &x.stmt.ids, &x.stmt.mask, x.n)?,
            ast: encoders::tree_lstm_run(tape, p, "tree", "emb.ast", &x.trees)?,
            names: encoders::gru_encode_batch(tape, p, "gru.names", "emb.tok", &x.names.ids, &x.names.mask, x.n)?,
            types: encoders::gru_encode_batch(tape, p, "gru.types", "emb.tok", &x.types.ids, &x.types.mask, x.n)?,
        })
    }

    /// Values, for reuse as constants on other tapes.
    pub fn values(&self, tape: &Tape) -> [Tensor; 4] {
        [self.stmt, self.ast, self.names, self.types].map(|v| tape.value(v).clone())
    }

    pub fn from_values(tape: &mut Tape, values: &[Tensor; 4]) -> Self {
        let [a, b, c, d] = values.clone().map(|t| tape.constant(t));
        StaticFeatures {
            stmt: a,
            ast: b,
            names: c,
            types: d,
        }
    }
}

fn context_encode(
    tape: &mut Tape,
    p: &Bound,
    prefix: &str,
    stmt: Var,
    ctx: &Context,
    n: usize,
    gates: &EdgeGates,
) -> Result<Var, TensorError> {
    let xs = if ctx.steps == 0 { stmt } else { tape.gather_rows(stmt, &ctx.rows)? };
    let masks = match gates {
        EdgeGates::Full => encoders::step_masks(tape, &ctx.live, n),
        _ => {
            let all = gates.noisy_or(tape, &ctx.targets, &[ctx.steps * n, 1])?;
            (0..ctx.steps)
                .map(|t| tape.slice(all, 0, t * n, n).map(Some))
                .collect::<Result<_, _>>()?
        }
    };
    encoders::gru_run(tape, p, prefix, xs, n, &masks)
}

/// `D^-1/2 A D^-1/2` for a square `a` with positive row sums.
pub fn normalize(tape: &mut Tape, a: Var) -> Result<Var, TensorError> {
    let d = tape.sum_axis(a, 1)?;
    let log_d = tape.log(d);
    let half = tape.scale(log_d, -0.5);
    let dinv = tape.exp(half);
    let rows = tape.scale_rows(a, dinv)?;
    let dinv_t = tape.transpose(dinv);
    tape.mul(rows, dinv_t)
}

/// Symmetrised adjacency plus self-loops, normalised.
pub fn normalized_adjacency(g: &Pdg) -> Tensor {
    let n = g.len();
    let mut a = Tensor::eye(n);
    for e in &g.edges {
        if e.src != e.dst {
            a.data_mut()[e.src * n + e.dst] = 1.0;
            a.data_mut()[e.dst * n + e.src] = 1.0;
        }
    }
    let mut t = Tape::new();
    let v = t.constant(a);
    let out = normalize(&mut t, v).expect("square matrix");
    t.value(out).clone()
}

pub fn gcn_forward(tape: &mut Tape, p: &Bound, adj: Var, f: Var) -> Result<Var, TensorError> {
    let mut h = f;
    for w in ["gcn.W1", "gcn.W2"] {
        let ah = tape.matmul(adj, h)?;
        let z = tape.matmul(ah, p.get(w)?)?;
        h = tape.relu(z);
    }
    Ok(h)
}

/// Row ranges pooled for `n` rows: `L` contiguous bins per level; with
/// fewer rows than bins, bin `b` is the single row `floor(b * n / L)`.
pub fn pyramid_bins(n: usize) -> Vec<(usize, usize)> {
    let mut bins = Vec::new();
    for &l in &PYRAMID_LEVELS {
        for b in 0..l {
            if n >= l {
                bins.push((b * n / l, (b + 1) * n / l));
            } else {
                let r = b * n / l;
                bins.push((r, r + 1));
            }
        }
    }
    bins
}

pub fn pyramid_pool(tape: &mut Tape, h: Var) -> Result<Var, TensorError> {
    let n = tape.value(h).rows();
    let parts = pyramid_bins(n)
        .into_iter()
        .map(|(s, e)| tape.max_rows(h, s, e))
        .collect::<Result<Vec<_>, _>>()?;
    tape.concat(&parts, 1)
}

fn classifier(tape: &mut Tape, p: &Bound, pooled: Var) -> Result<Var, TensorError> {
    let mut h = pooled;
    for k in 1..=3 {
        let z = tape.matmul(h, p.get(&format!("fc{k}.W"))?)?;
        let z = tape.add(z, p.get(&format!("fc{k}.b"))?)?;
        h = if k < 3 { tape.relu(z) } else { z };
    }
    tape.softmax(h, 1)
}

/// Class distribution `[1, 2]` (NV, V) from precomputed static features.
pub fn forward_with(
    tape: &mut Tape,
    p: &Bound,
    x: &MethodInput,
    statics: StaticFeatures,
    gates: &EdgeGates,
) -> Result<Var, TensorError> {
    let n = x.n;
    let data = context_encode(tape, p, "gru.data", statics.stmt, &x.data_ctx, n, gates)?;
    let ctrl = context_encode(tape, p, "gru.ctrl", statics.stmt, &x.ctrl_ctx, n, gates)?;
    let feats = [statics.stmt, statics.ast, statics.names, statics.types, data, ctrl];
    let weights = encoders::attention_weights(tape, p, "att", &feats)?;
    let weighted = encoders::weight_features(tape, &feats, weights)?;
    let pairs = gates.noisy_or(tape, &x.window, &[n, n])?;
    let eye = tape.constant(Tensor::eye(n));
    let window = tape.add(pairs, eye)?;
    let fused = encoders::fuse_statements(tape, p, "fuse", &weighted, window)?;
    let adj = normalize(tape, window)?;
    let h = gcn_forward(tape, p, adj, fused)?;
    let pooled = pyramid_pool(tape, h)?;
    classifier(tape, p, pooled)
}

pub fn forward(tape: &mut Tape, p: &Bound, x: &MethodInput, gates: &EdgeGates) -> Result<Var, TensorError> {
    let statics = StaticFeatures::compute(tape, p, x)?;
    forward_with(tape, p, x, statics, gates)
}

/// `-log P(label)` for a class distribution.
pub fn nll(tape: &mut Tape, probs: Var, vulnerable: bool) -> Result<Var, TensorError> {
    let p = tape.slice(probs, 1, usize::from(vulnerable), 1)?;
    let lp = tape.log(p);
    let s = tape.sum(lp);
    Ok(tape.neg(s))
}

#[derive(Debug, Clone)]
pub struct DetectionModel {
    pub config: ModelConfig,
    pub tokens: Vocabulary,
    pub labels: Vocabulary,
    pub params: ParamStore,
    /// Scores at or above the threshold are vulnerable.
    pub threshold: f64,
}

impl DetectionModel {
    pub fn new(config: ModelConfig, tokens: Vocabulary, labels: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, tokens.len(), labels.len(), seed)?;
        Ok(DetectionModel {
            config,
            tokens,
            labels,
            params,
            threshold: 0.5,
        })
    }

    /// A fresh model whose vocabularies come from `graphs`.
    pub fn for_corpus<'a>(config: ModelConfig, graphs: impl IntoIterator<Item = &'a Pdg>, seed: u64) -> Result<Self> {
        let feats: Vec<StatementFeatures> = graphs
            .into_iter()
            .flat_map(|g| method_features(g, &config.features))
            .collect();
        let tokens = build_token_vocabulary(&feats, config.min_count);
        let labels = build_label_vocabulary(&feats, config.min_count);
        Self::new(config, tokens, labels, seed)
    }

    pub fn prepare(&self, g: &Pdg) -> MethodInput {
        let feats = method_features(g, &self.config.features);
        MethodInput::new(g, &feats, &self.config.features, &self.tokens, &self.labels)
    }

    /// `[P(NV), P(V)]`.
    pub fn probabilities(&self, x: &MethodInput, gates: &EdgeGates) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let out = forward(&mut tape, &p, x, gates)?;
        let d = tape.value(out).data();
        Ok([d[0], d[1]])
    }

    pub fn score_input(&self, x: &MethodInput) -> Result<f64> {
        Ok(self.probabilities(x, &EdgeGates::Full)?[1])
    }

    pub fn decide(&self, score: f64) -> Decision {
        if score >= self.threshold {
            Decision::V
        } else {
            Decision::NV
        }
    }

    pub fn classify(&self, g: &Pdg) -> Result<(f64, Decision)> {
        let s = self.score_input(&self.prepare(g))?;
        Ok((s, self.decide(s)))
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let extra = json!({
            "config": self.config,
            "tokens": self.tokens.to_json(),
            "labels": self.labels.to_json(),
            "threshold": self.threshold,
        });
        checkpoint::save(out, &self.params, extra)?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let (params, extra) = checkpoint::load(input)?;
        let bad = |m: String| ModelError::Checkpoint(m);
        let config: ModelConfig =
            serde_json::from_value(extra["config"].clone()).map_err(|e| bad(format!("config: {e}")))?;
        let tokens = Vocabulary::from_json(&extra["tokens"]).map_err(|e| bad(format!("tokens: {e}")))?;
        let labels = Vocabulary::from_json(&extra["labels"]).map_err(|e| bad(format!("labels: {e}")))?;
        let threshold = extra["threshold"].as_f64().ok_or_else(|| bad("missing threshold".into()))?;
        let expected = init_params(&config, tokens.len(), labels.len(), 0)?;
        for e in expected.params() {
            let got = params.get(&e.name).map_err(|_| bad(format!("missing parameter {}", e.name)))?;
            if got.shape() != e.value.shape() {
                return Err(bad(format!("parameter {} has shape {:?}", e.name, got.shape())));
            }
        }
        Ok(DetectionModel {
            config,
            tokens,
            labels,
            params,
            threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn adjacency_small_cases() {
        let one = parse_source("void f(){ return; }").unwrap().remove(0);
        assert_eq!(normalized_adjacency(&one).data(), &[1.0]);
        let two = parse_source("void f(){ a = 1; b = a; }").unwrap().remove(0);
        assert!(close(normalized_adjacency(&two).data(), &[0.5; 4], 1e-15));
        // path 0 - 1 - 2, degrees with self-loops (2, 3, 2)
        let path = parse_source("void f(){ a = 1; b = a; c = b; }").unwrap().remove(0);
        let (x, y) = (1.0 / 2.0, 1.0 / 6f64.sqrt());
        let expect = [x, y, 0.0, y, 1.0 / 3.0, y, 0.0, y, x];
        assert!(close(normalized_adjacency(&path).data(), &expect, 1e-15));
    }

    #[test]
    fn pyramid_bins_cover_rows() {
        assert_eq!(pyramid_bins(1), vec![(0, 1); 7]);
        assert_eq!(&pyramid_bins(4)[3..], &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(pyramid_bins(5), vec![(0, 5), (0, 2), (2, 5), (0, 1), (1, 2), (2, 3), (3, 5)]);
        assert_eq!(&pyramid_bins(3)[3..], &[(0, 1), (0, 1), (1, 2), (2, 3)]);
    }

    fn small_model(src: &str) -> (DetectionModel, Pdg) {
        let g = parse_source(src).unwrap().remove(0);
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                embed_dim: 4,
                gru_hidden: 4,
                tree_hidden: 4,
                attn_hidden: 3,
                summary_dim: 2,
                stmt_dim: 5,
            },
            gcn_dim: 4,
            fc_hidden: [6, 3],
            ..Default::default()
        };
        (DetectionModel::for_corpus(cfg, [&g], 1).unwrap(), g)
    }

    const SRC: &str = "int f(char *buf, int len){ int n = len; if (n > 16) n = 16; memcpy(dst, buf, n); return n; }";

    #[test]
    fn scores_are_probabilities() {
        let (m, g) = small_model(SRC);
        let x = m.prepare(&g);
        let p = m.probabilities(&x, &EdgeGates::Full).unwrap();
        assert!(p[1] > 0.0 && p[1] < 1.0);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_soft_mask_matches_unmasked() {
        let (m, g) = small_model(SRC);
        let x = m.prepare(&g);
        let full = m.probabilities(&x, &EdgeGates::Full).unwrap();
        let mut tape = Tape::new();
        let p = m.params.bind(&mut tape, false);
        let logits = tape.constant(Tensor::full(&[x.edge_count()], 20.0));
        let out = forward(&mut tape, &p, &x, &EdgeGates::Soft(logits)).unwrap();
        assert!(close(tape.value(out).data(), &full, 1e-6));
        let ones = m.probabilities(&x, &EdgeGates::Hard(vec![1.0; x.edge_count()])).unwrap();
        assert!(close(&ones, &full, 1e-14));
    }

    #[test]
    fn closed_mask_matches_edgeless_graph() {
        let (m, g) = small_model(SRC);
        let x = m.prepare(&g);
        let mut bare = g.clone();
        bare.edges.clear();
        let edgeless = m.probabilities(&m.prepare(&bare), &EdgeGates::Full).unwrap();
        let mut tape = Tape::new();
        let p = m.params.bind(&mut tape, false);
        let logits = tape.constant(Tensor::full(&[x.edge_count()], -20.0));
        let out = forward(&mut tape, &p, &x, &EdgeGates::Soft(logits)).unwrap();
        assert!(close(tape.value(out).data(), &edgeless, 1e-6));
        let zeros = m.probabilities(&x, &EdgeGates::Hard(vec![0.0; x.edge_count()])).unwrap();
        assert!(close(&zeros, &edgeless, 1e-14));
    }

    #[test]
    fn checkpoint_round_trip() {
        let (mut m, g) = small_model(SRC);
        m.threshold = 0.37;
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = DetectionModel::load(buf.as_slice()).unwrap();
        assert_eq!(back.threshold, 0.37);
        assert_eq!(back.config, m.config);
        assert_eq!(back.classify(&g).unwrap(), m.classify(&g).unwrap());
    }
}
