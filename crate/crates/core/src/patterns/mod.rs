//! Frequent sub-graph patterns over abstracted interpretation sub-graphs.

mod gspan;
mod verify;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explainer::InterpretationSubgraph;
use crate::frontend::{render_tokens, tokenize, EdgeKind, LitKind, Pdg, StmtKind, Token, TokenKind};

pub use gspan::mine_patterns;
pub use verify::{has_embedding, verified_support};

/// Largest pattern the miner grows, in edges.
pub const MAX_PATTERN_EDGES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("min_support must be at least 2, got {0}")]
    SupportTooLow(usize),
    #[error("size range {0}..={1} must lie within 1..=8")]
    BadSizeRange(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractNode {
    /// Statement index in the source PDG (pattern-local in mined patterns).
    pub index: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// A sub-graph with identifiers and literals replaced by placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractGraph {
    pub method: String,
    pub nodes: Vec<AbstractNode>,
    pub edges: Vec<AbstractEdge>,
}

impl AbstractGraph {
    /// Position of the node with statement index `index`.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.index == index)
    }

    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n", escape(&self.method));
        for n in &self.nodes {
            out += &format!("  n{} [label=\"{}\"];\n", n.index, escape(&n.label));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Data => "solid",
                EdgeKind::Control => "dashed",
            };
            out += &format!("  n{} -> n{} [style={style}];\n", e.src, e.dst);
        }
        out + "}\n"
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn abstract_tokens(tokens: &[Token]) -> Vec<Token> {
    let mut out = tokens.to_vec();
    for (i, t) in out.iter_mut().enumerate() {
        let next = tokens.get(i + 1);
        let prev = i.checked_sub(1).map(|p| &tokens[p]);
        t.text = match t.kind {
            TokenKind::Literal(LitKind::Int) => "INTLITERAL".into(),
            TokenKind::Literal(LitKind::Str) => "STRINGLITERAL".into(),
            TokenKind::Literal(LitKind::Char) => "CHARLITERAL".into(),
            // callees and struct tags keep their names
            TokenKind::Ident if next.is_some_and(|n| n.is("(")) => continue,
            TokenKind::Ident if prev.is_some_and(|p| ["struct", "union", "enum"].iter().any(|k| p.is(k))) => continue,
            TokenKind::Ident if prev.is_some_and(|p| p.is("goto")) => "LABEL".into(),
            TokenKind::Ident => "VAR".into(),
            _ => continue,
        };
    }
    out
}

/// A statement's text with variables as `VAR`, literals as
/// `INTLITERAL`/`STRINGLITERAL`/`CHARLITERAL` and label names as `LABEL`.
/// Called functions keep their names.
pub fn abstract_statement(text: &str, kind: StmtKind) -> String {
    if kind == StmtKind::Label {
        return "LABEL:".into();
    }
    match tokenize(text) {
        Ok(tokens) => render_tokens(&abstract_tokens(&tokens)),
        // imported graphs may carry text outside the grammar
        Err(_) => "UNPARSED".into(),
    }
}

/// The sub-graph's kept statements and edges, abstracted.
pub fn abstract_subgraph(s: &InterpretationSubgraph, g: &Pdg) -> AbstractGraph {
    let nodes = s
        .nodes
        .iter()
        .map(|&i| AbstractNode {
            index: i,
            label: abstract_statement(&g.nodes[i].text, g.nodes[i].kind),
        })
        .collect();
    let edges = s
        .edges
        .iter()
        .map(|e| AbstractEdge {
            src: e.src,
            dst: e.dst,
            kind: e.edge().kind,
        })
        .collect();
    AbstractGraph {
        method: s.method.clone(),
        nodes,
        edges,
    }
}

/// How pattern size is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMeasure {
    #[default]
    Edges,
    Nodes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    /// Canonical (minimum) DFS code, rendered.
    pub code: String,
    pub support: usize,
    /// Edge count.
    pub size: usize,
    pub graph: AbstractGraph,
    /// Methods of the source graphs containing the pattern, sorted.
    pub sources: Vec<String>,
}

impl Pattern {
    pub fn node_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn measure(&self, by: SizeMeasure) -> usize {
        match by {
            SizeMeasure::Edges => self.size,
            SizeMeasure::Nodes => self.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternsReport {
    pub min_support: usize,
    pub sizes: (usize, usize),
    pub measure: SizeMeasure,
    pub patterns: Vec<Pattern>,
}

/// Mines with sizes in `sizes` measured by `measure`. Node-count ranges
/// are searched over patterns of up to eight edges.
pub fn mine_report(graphs: &[AbstractGraph], min_support: usize, sizes: (usize, usize), measure: SizeMeasure) -> Result<PatternsReport, PatternError> {
    let patterns = match measure {
        SizeMeasure::Edges => mine_patterns(graphs, min_support, sizes)?,
        SizeMeasure::Nodes => {
            if sizes.0 < 2 || sizes.0 > sizes.1 {
                return Err(PatternError::BadSizeRange(sizes.0, sizes.1));
            }
            mine_patterns(graphs, min_support, (1, MAX_PATTERN_EDGES))?
                .into_iter()
                .filter(|p| (sizes.0..=sizes.1).contains(&p.node_count()))
                .collect()
        }
    };
    Ok(PatternsReport {
        min_support,
        sizes,
        measure,
        patterns,
    })
}

/// Pattern counts per (size, threshold), sizes as rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternTable {
    pub supports: Vec<usize>,
    pub sizes: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
}

impl PatternTable {
    pub fn totals(&self) -> Vec<usize> {
        (0..self.supports.len()).map(|j| self.counts.iter().map(|row| row[j]).sum()).collect()
    }
}

impl fmt::Display for PatternTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "")?;
        for s in &self.supports {
            write!(f, "{:>10}", format!("thres={s}"))?;
        }
        writeln!(f)?;
        for (size, row) in self.sizes.iter().zip(&self.counts) {
            write!(f, "{:<10}", format!("size={size}"))?;
            for c in row {
                write!(f, "{c:>10}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<10}", "Total")?;
        for t in self.totals() {
            write!(f, "{t:>10}")?;
        }
        writeln!(f)
    }
}

/// Number of patterns of exactly each edge size, mined separately at each
/// threshold.
pub fn pattern_count_table(graphs: &[AbstractGraph], supports: &[usize], sizes: &[usize]) -> Result<PatternTable, PatternError> {
    let lo = sizes.iter().copied().min().unwrap_or(1);
    let hi = sizes.iter().copied().max().unwrap_or(1);
    let mut counts = vec![vec![0; supports.len()]; sizes.len()];
    for (j, &s) in supports.iter().enumerate() {
        let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
        for p in mine_patterns(graphs, s, (lo, hi))? {
            *by_size.entry(p.size).or_default() += 1;
        }
        for (i, size) in sizes.iter().enumerate() {
            counts[i][j] = by_size.get(size).copied().unwrap_or(0);
        }
    }
    Ok(PatternTable {
        supports: supports.to_vec(),
        sizes: sizes.to_vec(),
        counts,
    })
}
