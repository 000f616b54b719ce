use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{declared_type_in, MethodAst, Param, StmtNode};
use super::cfg::build_cfg;
use super::deps::{control_dependences, data_dependences};
use super::lexer::tokenize;
use super::parser::parse_program;
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Control,
    Data,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Control => "control",
            EdgeKind::Data => "data",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PdgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub var: Option<String>,
}

impl PdgEdge {
    pub fn data(src: usize, dst: usize, var: &str) -> Self {
        Self {
            src,
            dst,
            kind: EdgeKind::Data,
            var: Some(var.to_string()),
        }
    }

    pub fn control(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            kind: EdgeKind::Control,
            var: None,
        }
    }
}

impl fmt::Display for PdgEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{} {}", self.src, self.dst, self.kind)?;
        if let Some(v) = &self.var {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

/// Program dependence graph of one method. `edges` is sorted by
/// `(src, dst, kind, var)` and that order is the canonical edge index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pdg {
    pub method: String,
    pub params: Vec<Param>,
    pub nodes: Vec<StmtNode>,
    pub edges: Vec<PdgEdge>,
}

impl Pdg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Statements joined to `idx` by an edge of `kind` in either direction,
    /// ascending, without `idx` itself.
    pub fn neighbors_by(&self, idx: usize, kind: Option<EdgeKind>) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .edges
            .iter()
            .filter(|e| kind.map_or(true, |k| e.kind == k))
            .filter_map(|e| {
                if e.src == idx {
                    Some(e.dst)
                } else if e.dst == idx {
                    Some(e.src)
                } else {
                    None
                }
            })
            .filter(|&j| j != idx)
            .collect();
        set.into_iter().collect()
    }

    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        self.neighbors_by(idx, None)
    }

    /// Static type of `var` from the parameter list or a declaration.
    pub fn declared_type(&self, var: &str) -> Option<String> {
        if let Some(p) = self.params.iter().find(|p| p.name == var) {
            return Some(p.ty.clone());
        }
        self.nodes.iter().find_map(|s| declared_type_in(s, var))
    }

    /// Statement index whose source line is `line`, first match.
    pub fn stmt_at_line(&self, line: usize) -> Option<usize> {
        self.nodes.iter().position(|s| s.line == line)
    }

    /// Checks the structural invariants: contiguous indices, no self-loops,
    /// endpoints in range, data edges justified by def/use sets, control
    /// edges leaving predicates, canonical order.
    pub fn validate(&self) -> Result<(), FrontendError> {
        for (i, s) in self.nodes.iter().enumerate() {
            if s.index != i {
                return Err(FrontendError::SchemaError {
                    path: format!("nodes[{i}].index"),
                    message: format!("expected {i}, found {}", s.index),
                });
            }
            if s.ast.is_none() && s.kind != super::StmtKind::Label {
                return Err(FrontendError::SchemaError {
                    path: format!("nodes[{i}].ast"),
                    message: format!("missing ast for a `{}` statement", s.kind),
                });
            }
        }
        let n = self.nodes.len();
        let bad = |e: &PdgEdge, message: &str| FrontendError::InvariantViolation {
            edge: e.to_string(),
            message: message.to_string(),
        };
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(bad(e, "endpoint out of range"));
            }
            if e.src == e.dst {
                return Err(bad(e, "self-loop"));
            }
            match (e.kind, &e.var) {
                (EdgeKind::Data, Some(v)) => {
                    if !self.nodes[e.src].defs.contains(v) {
                        return Err(bad(e, "variable is not defined at the source"));
                    }
                    if !self.nodes[e.dst].uses.contains(v) {
                        return Err(bad(e, "variable is not used at the destination"));
                    }
                }
                (EdgeKind::Data, None) => return Err(bad(e, "data edge without a variable")),
                (EdgeKind::Control, Some(_)) => return Err(bad(e, "control edge with a variable")),
                (EdgeKind::Control, None) => {
                    if !self.nodes[e.src].kind.is_predicate() {
                        return Err(bad(e, "control edge from a non-predicate"));
                    }
                }
            }
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FrontendError::InvariantViolation {
                edge: "edges".into(),
                message: "edges must be unique and sorted by (src, dst, kind, var)".into(),
            });
        }
        Ok(())
    }
}

pub fn build_pdg(m: &MethodAst) -> Result<Pdg, FrontendError> {
    if m.body.is_empty() {
        return Err(FrontendError::EmptyMethod(m.name.clone()));
    }
    let cfg = build_cfg(m)?;
    let n = m.body.len();
    let mut edges: Vec<PdgEdge> = data_dependences(m, &cfg)
        .into_iter()
        .filter(|(d, u, _)| d != u)
        .map(|(d, u, v)| PdgEdge::data(d, u, &v))
        .collect();
    edges.extend(
        control_dependences(&cfg)
            .into_iter()
            .filter(|&(p, s)| p < n && s < n && p != s && m.body[p].kind.is_predicate())
            .map(|(p, s)| PdgEdge::control(p, s)),
    );
    edges.sort();
    edges.dedup();
    Ok(Pdg {
        method: m.name.clone(),
        params: m.params.clone(),
        nodes: m.body.clone(),
        edges,
    })
}

/// Tokenizes, parses and builds one PDG per function in `source`.
pub fn parse_source(source: &str) -> Result<Vec<Pdg>, FrontendError> {
    let tokens = tokenize(source)?;
    parse_program(&tokens)?.iter().map(build_pdg).collect()
}
