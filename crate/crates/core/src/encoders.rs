//! Statement encoders. Everything here works on a whole method at once:
//! rows of every matrix are statements (or AST nodes), so one tape op
//! serves all statements.

use pdgvd_autodiff::{Bound, ParamStore, Rng, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::frontend::Ast;
use crate::features::Vocabulary;

type Result<T> = std::result::Result<T, TensorError>;

/// Feature slots per statement: sub-tokens, AST, variable names, variable
/// types, data context, control context.
pub const FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub gru_hidden: usize,
    pub tree_hidden: usize,
    /// Hidden width of each direction of the attention Bi-GRU.
    pub attn_hidden: usize,
    /// Output width of the per-feature summariser `h`.
    pub summary_dim: usize,
    pub stmt_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            gru_hidden: 32,
            tree_hidden: 32,
            attn_hidden: 16,
            summary_dim: 8,
            stmt_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("gru_hidden", self.gru_hidden),
            ("tree_hidden", self.tree_hidden),
            ("attn_hidden", self.attn_hidden),
            ("summary_dim", self.summary_dim),
            ("stmt_dim", self.stmt_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d < 2) {
            return Err(format!("{name} must be at least 2"));
        }
        // The attention layer reads all six features as one sequence.
        if self.tree_hidden != self.gru_hidden {
            return Err("tree_hidden must equal gru_hidden".into());
        }
        Ok(())
    }
}

fn glorot(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<()> {
    store.insert_glorot(name, fan_in, fan_out, rng).map(|_| ())
}

/// GRU weights under `prefix`: input projection for all three gates, the
/// recurrent update/reset block, the recurrent candidate block, and biases.
pub fn init_gru(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<()> {
    glorot(store, &format!("{prefix}.W"), input, 3 * hidden, rng)?;
    glorot(store, &format!("{prefix}.U_zr"), hidden, 2 * hidden, rng)?;
    glorot(store, &format!("{prefix}.U_n"), hidden, hidden, rng)?;
    store.insert_zeros(&format!("{prefix}.b"), &[1, 3 * hidden])?;
    Ok(())
}

pub fn init_tree_lstm(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<()> {
    glorot(store, &format!("{prefix}.W_iou"), input, 3 * hidden, rng)?;
    glorot(store, &format!("{prefix}.U_iou"), hidden, 3 * hidden, rng)?;
    store.insert_zeros(&format!("{prefix}.b_iou"), &[1, 3 * hidden])?;
    glorot(store, &format!("{prefix}.W_f"), input, hidden, rng)?;
    glorot(store, &format!("{prefix}.U_f"), hidden, hidden, rng)?;
    // Forget bias 1 keeps child memories flowing early in training.
    store.insert(&format!("{prefix}.b_f"), Tensor::full(&[1, hidden], 1.0))?;
    Ok(())
}

/// Per-step mask: `None` means every sequence in the batch is live.
pub type StepMask = Option<Var>;

/// Runs a GRU over `masks.len()` steps of `batch` sequences. `xs` holds the
/// step inputs stacked step-major (`[steps * batch, input]`). A masked
/// position leaves the hidden state as it was; fractional masks blend.
pub fn gru_run(tape: &mut Tape, p: &Bound, prefix: &str, xs: Var, batch: usize, masks: &[StepMask]) -> Result<Var> {
    let u_zr = p.get(&format!("{prefix}.U_zr"))?;
    let u_n = p.get(&format!("{prefix}.U_n"))?;
    let hidden = tape.shape(u_n)[0];
    let mut h = tape.constant(Tensor::zeros(&[batch, hidden]));
    if masks.is_empty() {
        return Ok(h);
    }
    let xw = tape.matmul(xs, p.get(&format!("{prefix}.W"))?)?;
    let xw = tape.add(xw, p.get(&format!("{prefix}.b"))?)?;
    for (t, mask) in masks.iter().enumerate() {
        let xt = tape.slice(xw, 0, t * batch, batch)?;
        let x_zr = tape.slice(xt, 1, 0, 2 * hidden)?;
        let x_n = tape.slice(xt, 1, 2 * hidden, hidden)?;
        let h_zr = tape.matmul(h, u_zr)?;
        let zr = tape.add(x_zr, h_zr)?;
        let zr = tape.sigmoid(zr);
        let z = tape.slice(zr, 1, 0, hidden)?;
        let r = tape.slice(zr, 1, hidden, hidden)?;
        let rh = tape.mul(r, h)?;
        let rh_u = tape.matmul(rh, u_n)?;
        let n = tape.add(x_n, rh_u)?;
        let n = tape.tanh(n);
        // (1 - z) * n + z * h  ==  n + z * (h - n)
        let h_minus_n = tape.sub(h, n)?;
        let gated = tape.mul(z, h_minus_n)?;
        let h_new = tape.add(n, gated)?;
        h = match mask {
            None => h_new,
            Some(m) => {
                let delta = tape.sub(h_new, h)?;
                let delta = tape.scale_rows(delta, *m)?;
                tape.add(h, delta)?
            }
        };
    }
    Ok(h)
}

/// Step masks for a step-major 0/1 mask matrix, trimmed after the last
/// step where any sequence is live.
pub fn step_masks(tape: &mut Tape, mask: &[u8], batch: usize) -> Vec<StepMask> {
    let steps = if batch == 0 { 0 } else { mask.len() / batch };
    let live = (0..steps)
        .rev()
        .find(|&t| mask[t * batch..(t + 1) * batch].iter().any(|&m| m != 0))
        .map_or(0, |t| t + 1);
    (0..live)
        .map(|t| {
            let col = &mask[t * batch..(t + 1) * batch];
            if col.iter().all(|&m| m != 0) {
                None
            } else {
                let data = col.iter().map(|&m| f64::from(m)).collect();
                Some(tape.constant(Tensor::matrix(batch, 1, data).expect("column shape")))
            }
        })
        .collect()
}

/// Embeds step-major token ids and runs a GRU over them.
pub fn gru_encode_batch(
    tape: &mut Tape,
    p: &Bound,
    prefix: &str,
    embedding: &str,
    ids: &[usize],
    mask: &[u8],
    batch: usize,
) -> Result<Var> {
    if ids.len() != mask.len() {
        return Err(TensorError::ShapeMismatch {
            expected: vec![ids.len()],
            got: vec![mask.len()],
        });
    }
    let masks = step_masks(tape, mask, batch);
    let live = masks.len() * batch;
    let emb = p.get(embedding)?;
    let xs = if live == 0 {
        emb
    } else {
        tape.gather_rows(emb, &ids[..live])?
    };
    gru_run(tape, p, prefix, xs, batch, &masks)
}

/// Single-sequence GRU encoding: `[1, hidden]`.
pub fn gru_encode(tape: &mut Tape, p: &Bound, prefix: &str, embedding: &str, ids: &[usize], mask: &[u8]) -> Result<Var> {
    gru_encode_batch(tape, p, prefix, embedding, ids, mask, 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TreeLevel {
    start: usize,
    len: usize,
    /// Rows (in the all-levels order) of the children of this level's nodes.
    child_rows: Vec<usize>,
    /// Local index of each child's parent within this level.
    child_parent: Vec<usize>,
}

/// The AST nodes of a set of statements laid out by height, leaves first,
/// so each level depends only on earlier ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeBatch {
    labels: Vec<usize>,
    levels: Vec<TreeLevel>,
    /// `(statement, row)` for each statement that has a tree.
    roots: Vec<(usize, usize)>,
    statements: usize,
}

impl TreeBatch {
    pub fn new(trees: &[Option<&Ast>], vocab: &Vocabulary) -> Self {
        // Flatten in pre-order: (label, height, parent flat index).
        struct Flat {
            label: usize,
            height: usize,
            parent: Option<usize>,
        }
        fn go(a: &Ast, parent: Option<usize>, vocab: &Vocabulary, out: &mut Vec<Flat>) -> usize {
            let me = out.len();
            out.push(Flat {
                label: vocab.id(&a.vocab_label()),
                height: 0,
                parent,
            });
            let mut h = 0;
            for c in &a.children {
                h = h.max(1 + go(c, Some(me), vocab, out));
            }
            out[me].height = h;
            h
        }
        let mut flat = Vec::new();
        let mut root_flat = Vec::new();
        for (s, t) in trees.iter().enumerate() {
            if let Some(a) = t {
                root_flat.push((s, flat.len()));
                go(a, None, vocab, &mut flat);
            }
        }
        let max_h = flat.iter().map(|f| f.height).max();
        let mut row_of = vec![0; flat.len()];
        let mut order = Vec::with_capacity(flat.len());
        let mut levels = Vec::new();
        for h in 0..=max_h.unwrap_or(0) {
            if max_h.is_none() {
                break;
            }
            let start = order.len();
            for (i, f) in flat.iter().enumerate() {
                if f.height == h {
                    row_of[i] = order.len();
                    order.push(i);
                }
            }
            levels.push(TreeLevel {
                start,
                len: order.len() - start,
                child_rows: Vec::new(),
                child_parent: Vec::new(),
            });
        }
        for (i, f) in flat.iter().enumerate() {
            if let Some(p) = f.parent {
                let lvl = &mut levels[flat[p].height];
                lvl.child_rows.push(row_of[i]);
                lvl.child_parent.push(row_of[p] - lvl.start);
            }
        }
        TreeBatch {
            labels: order.iter().map(|&i| flat[i].label).collect(),
            levels,
            roots: root_flat.into_iter().map(|(s, f)| (s, row_of[f])).collect(),
            statements: trees.len(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }
}

/// Child-sum Tree-LSTM over every tree in `batch`; one root state per
/// statement, zeros where a statement has no tree.
pub fn tree_lstm_run(tape: &mut Tape, p: &Bound, prefix: &str, embedding: &str, batch: &TreeBatch) -> Result<Var> {
    let u_f = p.get(&format!("{prefix}.U_f"))?;
    let hidden = tape.shape(u_f)[0];
    if batch.labels.is_empty() {
        return Ok(tape.constant(Tensor::zeros(&[batch.statements, hidden])));
    }
    let emb = p.get(embedding)?;
    let x = tape.gather_rows(emb, &batch.labels)?;
    let xw = tape.matmul(x, p.get(&format!("{prefix}.W_iou"))?)?;
    let xw = tape.add(xw, p.get(&format!("{prefix}.b_iou"))?)?;
    let xf = tape.matmul(x, p.get(&format!("{prefix}.W_f"))?)?;
    let xf = tape.add(xf, p.get(&format!("{prefix}.b_f"))?)?;
    let u_iou = p.get(&format!("{prefix}.U_iou"))?;

    let mut h_all: Option<Var> = None;
    let mut c_all: Option<Var> = None;
    for lvl in &batch.levels {
        let mut iou = tape.slice(xw, 0, lvl.start, lvl.len)?;
        let mut child_mem = None;
        if let (Some(h_prev), Some(c_prev)) = (h_all, c_all) {
            if !lvl.child_rows.is_empty() {
                let hc = tape.gather_rows(h_prev, &lvl.child_rows)?;
                let cc = tape.gather_rows(c_prev, &lvl.child_rows)?;
                let h_sum = tape.scatter_sum_rows(hc, &lvl.child_parent, lvl.len)?;
                let rec = tape.matmul(h_sum, u_iou)?;
                iou = tape.add(iou, rec)?;
                let xf_lvl = tape.slice(xf, 0, lvl.start, lvl.len)?;
                let xf_par = tape.gather_rows(xf_lvl, &lvl.child_parent)?;
                let hu = tape.matmul(hc, u_f)?;
                let f = tape.add(xf_par, hu)?;
                let f = tape.sigmoid(f);
                let fc = tape.mul(f, cc)?;
                child_mem = Some(tape.scatter_sum_rows(fc, &lvl.child_parent, lvl.len)?);
            }
        }
        let i = tape.slice(iou, 1, 0, hidden)?;
        let i = tape.sigmoid(i);
        let o = tape.slice(iou, 1, hidden, hidden)?;
        let o = tape.sigmoid(o);
        let u = tape.slice(iou, 1, 2 * hidden, hidden)?;
        let u = tape.tanh(u);
        let mut c = tape.mul(i, u)?;
        if let Some(fc) = child_mem {
            c = tape.add(c, fc)?;
        }
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        h_all = Some(match h_all {
            Some(prev) => tape.concat(&[prev, h], 0)?,
            None => h,
        });
        c_all = Some(match c_all {
            Some(prev) => tape.concat(&[prev, c], 0)?,
            None => c,
        });
    }
    let h_all = h_all.expect("at least one level");
    let rows: Vec<usize> = batch.roots.iter().map(|&(_, r)| r).collect();
    let stmts: Vec<usize> = batch.roots.iter().map(|&(s, _)| s).collect();
    let roots = tape.gather_rows(h_all, &rows)?;
    tape.scatter_sum_rows(roots, &stmts, batch.statements)
}

/// Encodes one tree: `[1, hidden]`.
pub fn tree_lstm_encode(tape: &mut Tape, p: &Bound, prefix: &str, embedding: &str, ast: &Ast, vocab: &Vocabulary) -> Result<Var> {
    tree_lstm_run(tape, p, prefix, embedding, &TreeBatch::new(&[Some(ast)], vocab))
}

pub fn init_attention(store: &mut ParamStore, prefix: &str, width: usize, hidden: usize, rng: &mut Rng) -> Result<()> {
    init_gru(store, &format!("{prefix}.fwd"), width, hidden, rng)?;
    init_gru(store, &format!("{prefix}.bwd"), width, hidden, rng)?;
    glorot(store, &format!("{prefix}.W_f"), width, hidden, rng)?;
    glorot(store, &format!("{prefix}.W_c"), 2 * hidden, hidden, rng)?;
    store.insert_zeros(&format!("{prefix}.b"), &[1, hidden])?;
    glorot(store, &format!("{prefix}.v"), hidden, 1, rng)?;
    Ok(())
}

/// Attention weights over a statement's feature vectors: a Bi-GRU reads the
/// features as a sequence, its two final states summarise them, and each
/// feature is scored against that summary. Returns `[rows, features]`,
/// each row summing to 1.
pub fn attention_weights(tape: &mut Tape, p: &Bound, prefix: &str, features: &[Var]) -> Result<Var> {
    let rows = tape.shape(features[0])[0];
    let width = tape.value(features[0]).cols();
    for &f in features {
        let (r, c) = tape.value(f).rows_cols();
        if (r, c) != (rows, width) {
            return Err(TensorError::ShapeMismatch {
                expected: vec![rows, width],
                got: vec![r, c],
            });
        }
    }
    let steps = vec![None; features.len()];
    let fwd_in = tape.concat(features, 0)?;
    let hf = gru_run(tape, p, &format!("{prefix}.fwd"), fwd_in, rows, &steps)?;
    let rev: Vec<Var> = features.iter().rev().copied().collect();
    let bwd_in = tape.concat(&rev, 0)?;
    let hb = gru_run(tape, p, &format!("{prefix}.bwd"), bwd_in, rows, &steps)?;
    let summary = tape.concat(&[hf, hb], 1)?;
    let cw = tape.matmul(summary, p.get(&format!("{prefix}.W_c"))?)?;
    let cw = tape.add(cw, p.get(&format!("{prefix}.b"))?)?;
    let w_f = p.get(&format!("{prefix}.W_f"))?;
    let v = p.get(&format!("{prefix}.v"))?;
    let mut scores = Vec::with_capacity(features.len());
    for &f in features {
        let e = tape.matmul(f, w_f)?;
        let e = tape.add(e, cw)?;
        let e = tape.tanh(e);
        scores.push(tape.matmul(e, v)?);
    }
    let s = tape.concat(&scores, 1)?;
    tape.softmax(s, 1)
}

/// `F'_j = W_j * F_j` row by row.
pub fn weight_features(tape: &mut Tape, features: &[Var], weights: Var) -> Result<Vec<Var>> {
    features
        .iter()
        .enumerate()
        .map(|(j, &f)| {
            let w = tape.slice(weights, 1, j, 1)?;
            tape.scale_rows(f, w)
        })
        .collect()
}

pub fn init_fusion(store: &mut ParamStore, prefix: &str, cfg: &EncoderConfig, rng: &mut Rng) -> Result<()> {
    glorot(store, &format!("{prefix}.h.W"), cfg.gru_hidden, cfg.summary_dim, rng)?;
    store.insert_zeros(&format!("{prefix}.h.b"), &[1, cfg.summary_dim])?;
    glorot(store, &format!("{prefix}.u"), FEATURES * cfg.summary_dim, 1, rng)?;
    store.insert_zeros(&format!("{prefix}.u_b"), &[1, 1])?;
    glorot(store, &format!("{prefix}.W_c"), FEATURES * cfg.summary_dim, cfg.stmt_dim, rng)?;
    Ok(())
}

/// Neighbourhood fusion. Each weighted feature goes through the shared
/// summariser `h`, the summaries are concatenated per statement (`z_i`),
/// and each statement's output is `sum_i a_ci * z_i W_c` over its window,
/// where `a_ci` is a softmax of a learned score of `z_i` over the window.
/// `window` is `[n, n]`: 1 on the diagonal, the neighbour gate between
/// statements elsewhere, 0 outside the window.
pub fn fuse_statements(tape: &mut Tape, p: &Bound, prefix: &str, weighted: &[Var], window: Var) -> Result<Var> {
    let h_w = p.get(&format!("{prefix}.h.W"))?;
    let h_b = p.get(&format!("{prefix}.h.b"))?;
    let mut parts = Vec::with_capacity(weighted.len());
    for &f in weighted {
        let s = tape.matmul(f, h_w)?;
        let s = tape.add(s, h_b)?;
        parts.push(tape.tanh(s));
    }
    let z = tape.concat(&parts, 1)?;
    let s = tape.matmul(z, p.get(&format!("{prefix}.u"))?)?;
    let s = tape.add(s, p.get(&format!("{prefix}.u_b"))?)?;
    let e = tape.exp(s);
    let e_row = tape.transpose(e);
    let num = tape.mul(window, e_row)?;
    let den = tape.sum_axis(num, 1)?;
    let log_den = tape.log(den);
    let neg = tape.neg(log_den);
    let inv = tape.exp(neg);
    let alpha = tape.scale_rows(num, inv)?;
    let mixed = tape.matmul(alpha, z)?;
    tape.matmul(mixed, p.get(&format!("{prefix}.W_c"))?)
}
