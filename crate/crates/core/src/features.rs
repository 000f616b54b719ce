//! Per-statement feature inputs: sub-token sequences, AST subtrees,
//! variable names and types, dependence contexts; plus the vocabulary.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::frontend::{Ast, EdgeKind, Pdg, KEYWORDS};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
/// Stands in for an unknown type; never receives its own id.
pub const UNK_TOKEN: &str = "<unk>";

/// Splits at underscores, lower-to-upper case changes, acronym ends
/// (`HTTPServer` → `http`, `server`) and letter/digit changes; lowercases;
/// drops one-character pieces.
pub fn split_identifier(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut pieces: Vec<String> = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphanumeric() {
            if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).map(|p| &chars[p]) {
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_ascii_lowercase() && c.is_ascii_uppercase())
                || (prev.is_ascii_digit() != c.is_ascii_digit() && prev.is_ascii_alphanumeric())
                || (prev.is_ascii_uppercase()
                    && c.is_ascii_uppercase()
                    && next.is_some_and(|n| n.is_ascii_lowercase()));
            if boundary && !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c.to_ascii_lowercase());
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    pieces.retain(|p| p.chars().count() > 1);
    pieces
}

/// Identifier-like words of a type string, keywords included
/// (`struct cros_ec_dev *` → `struct`, `cros_ec_dev`).
fn type_words(ty: &str) -> impl Iterator<Item = &str> {
    ty.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Identifiers of an AST in source order: variables, callees, fields and
/// user type names. Keywords and literals are skipped.
pub fn ast_identifiers(ast: &Ast) -> Vec<String> {
    fn go(a: &Ast, out: &mut Vec<String>) {
        let named_types = |ty: &str, out: &mut Vec<String>| {
            out.extend(type_words(ty).filter(|w| !KEYWORDS.contains(w)).map(str::to_string));
        };
        match a.kind() {
            "ident" => out.push(a.payload().unwrap_or("").to_string()),
            "member" => {
                a.children.iter().for_each(|c| go(c, out));
                if let Some((_, field)) = a.payload().and_then(|p| p.split_once(':')) {
                    out.push(field.to_string());
                }
                return;
            }
            "declarator" => {
                if let Some((ty, name)) = a.payload().and_then(|p| p.rsplit_once(':')) {
                    named_types(ty, out);
                    out.push(name.to_string());
                }
            }
            "cast" | "sizeof-type" => named_types(a.payload().unwrap_or(""), out),
            _ => {}
        }
        a.children.iter().for_each(|c| go(c, out));
    }
    let mut out = Vec::new();
    go(ast, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementFeatures {
    pub stmt: usize,
    /// Feature 1: sub-tokens of the statement's identifiers.
    pub subtokens: Vec<String>,
    /// Feature 2: the statement's AST, absent for labels.
    pub ast: Option<Ast>,
    /// Feature 3: one sub-token list per variable, and its type.
    pub var_names: Vec<Vec<String>>,
    pub var_types: Vec<Vec<String>>,
    /// Feature 4: 1-hop dependence neighbours.
    pub data_ctx: Vec<usize>,
    pub ctrl_ctx: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_subtokens: usize,
    pub max_var_tokens: usize,
    pub max_context: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_subtokens: 16,
            max_var_tokens: 8,
            max_context: 8,
        }
    }
}

/// Keeps the `cap` neighbours nearest to `idx` by index distance (ties to
/// the lower index), returned ascending.
fn nearest(mut ctx: Vec<usize>, idx: usize, cap: usize) -> Vec<usize> {
    if ctx.len() > cap {
        ctx.sort_by_key(|&j| (j.abs_diff(idx), j));
        ctx.truncate(cap);
        ctx.sort_unstable();
    }
    ctx
}

pub fn extract_statement_features(g: &Pdg, idx: usize, cfg: &FeatureConfig) -> StatementFeatures {
    let node = &g.nodes[idx];
    let idents = node.ast.as_ref().map(ast_identifiers).unwrap_or_default();
    let subtokens = idents.iter().flat_map(|i| split_identifier(i)).collect();

    // Plain variables touched by the statement, first appearance order.
    let mut vars: Vec<&str> = Vec::new();
    for i in &idents {
        if (node.defs.contains(i) || node.uses.contains(i)) && !vars.contains(&i.as_str()) {
            vars.push(i);
        }
    }
    let var_names = vars.iter().map(|v| split_identifier(v)).collect();
    let var_types = vars
        .iter()
        .map(|v| match g.declared_type(v) {
            Some(ty) => type_words(&ty).flat_map(split_identifier).collect(),
            None => vec![UNK_TOKEN.to_string()],
        })
        .collect();

    StatementFeatures {
        stmt: idx,
        subtokens,
        ast: node.ast.clone(),
        var_names,
        var_types,
        data_ctx: nearest(g.neighbors_by(idx, Some(EdgeKind::Data)), idx, cfg.max_context),
        ctrl_ctx: nearest(g.neighbors_by(idx, Some(EdgeKind::Control)), idx, cfg.max_context),
    }
}

pub fn method_features(g: &Pdg, cfg: &FeatureConfig) -> Vec<StatementFeatures> {
    (0..g.len()).map(|i| extract_statement_features(g, i, cfg)).collect()
}

/// Token to id map with `<pad>` = 0 and `<unk>` = 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, usize> = self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        serde_json::to_value(map).expect("string map serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        let map: BTreeMap<String, usize> = serde_json::from_value(v.clone()).map_err(|e| e.to_string())?;
        let mut tokens = vec![String::new(); map.len()];
        for (t, i) in map {
            let slot = tokens.get_mut(i).ok_or_else(|| format!("id {i} out of range"))?;
            if !slot.is_empty() {
                return Err(format!("id {i} assigned twice"));
            }
            *slot = t;
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err("ids 0 and 1 must be <pad> and <unk>".into());
        }
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { ids, tokens }
    }
}

/// Tokens seen at least `min_count` times get ids from 2, by descending
/// count then lexicographically.
pub fn build_vocabulary<'a, I, S>(seqs: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = &'a String>,
{
    let min_count = min_count.max(1);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in seqs {
        for t in seq {
            if t != PAD_TOKEN && t != UNK_TOKEN {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

/// Every sub-token a bundle contributes: statement, names and types.
pub fn bundle_tokens(f: &StatementFeatures) -> impl Iterator<Item = &String> {
    f.subtokens
        .iter()
        .chain(f.var_names.iter().flatten())
        .chain(f.var_types.iter().flatten())
}

/// Vocabulary over the sub-tokens of a feature corpus.
pub fn build_token_vocabulary(corpus: &[StatementFeatures], min_count: usize) -> Vocabulary {
    build_vocabulary(corpus.iter().map(bundle_tokens), min_count)
}

/// Vocabulary over AST node labels (payloads stripped).
pub fn build_label_vocabulary(corpus: &[StatementFeatures], min_count: usize) -> Vocabulary {
    let labels: Vec<Vec<String>> = corpus
        .iter()
        .filter_map(|f| f.ast.as_ref())
        .map(|a| {
            let mut v = Vec::new();
            a.walk(&mut |n| v.push(n.vocab_label()));
            v
        })
        .collect();
    build_vocabulary(labels.iter(), min_count)
}

/// Ids padded or truncated (keeping the prefix) to `max_len`, with a 0/1
/// mask marking real tokens.
pub fn vectorize(seq: &[String], v: &Vocabulary, max_len: usize) -> (Vec<usize>, Vec<u8>) {
    let mut ids = vec![PAD; max_len];
    let mut mask = vec![0u8; max_len];
    for (k, t) in seq.iter().take(max_len).enumerate() {
        ids[k] = v.id(t);
        mask[k] = 1;
    }
    (ids, mask)
}
