//! PDG-JSON import and export.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ast::{Ast, Param, StmtKind, StmtNode};
use super::pdg::{EdgeKind, Pdg, PdgEdge};
use super::FrontendError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocJson {
    method: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<Param>,
    nodes: Vec<NodeJson>,
    edges: Vec<EdgeJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeJson {
    index: usize,
    kind: String,
    text: String,
    defs: Vec<String>,
    uses: Vec<String>,
    ast: Option<Ast>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeJson {
    src: usize,
    dst: usize,
    kind: String,
    var: Option<String>,
}

fn to_doc(g: &Pdg) -> DocJson {
    DocJson {
        method: g.method.clone(),
        params: g.params.clone(),
        nodes: g
            .nodes
            .iter()
            .map(|s| NodeJson {
                index: s.index,
                kind: s.kind.as_str().to_string(),
                text: s.text.clone(),
                defs: s.defs.iter().cloned().collect(),
                uses: s.uses.iter().cloned().collect(),
                ast: s.ast.clone(),
                line: Some(s.line),
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeJson {
                src: e.src,
                dst: e.dst,
                kind: e.kind.as_str().to_string(),
                var: e.var.clone(),
            })
            .collect(),
    }
}

pub fn pdg_to_json(g: &Pdg) -> Value {
    serde_json::to_value(to_doc(g)).expect("PDG documents always serialize")
}

/// Pretty-printed PDG-JSON with a trailing newline, keys in schema order.
pub fn export_pdg_json(g: &Pdg) -> String {
    let mut s = serde_json::to_string_pretty(&to_doc(g)).expect("PDG documents always serialize");
    s.push('\n');
    s
}

pub fn import_pdg_json(doc: &Value) -> Result<Pdg, FrontendError> {
    let doc: DocJson = serde_path_to_error::deserialize(doc).map_err(|e| FrontendError::SchemaError {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let schema = |path: String, message: String| FrontendError::SchemaError { path, message };

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        let kind: StmtKind = n.kind.parse().map_err(|m| schema(format!("nodes[{i}].kind"), m))?;
        let label = match kind {
            StmtKind::Label => Some(n.text.trim().trim_end_matches(':').trim().to_string()),
            StmtKind::Goto => n
                .ast
                .as_ref()
                .filter(|a| a.kind() == "goto")
                .and_then(|a| a.payload())
                .map(str::to_string),
            _ => None,
        };
        nodes.push(StmtNode {
            index: n.index,
            kind,
            ast: n.ast,
            defs: n.defs.into_iter().collect::<BTreeSet<_>>(),
            uses: n.uses.into_iter().collect::<BTreeSet<_>>(),
            text: n.text,
            line: n.line.unwrap_or(0),
            label,
            jump_target: None,
        });
    }
    let labels: Vec<(String, usize)> = nodes
        .iter()
        .filter(|s| s.kind == StmtKind::Label)
        .filter_map(|s| s.label.clone().map(|l| (l, s.index)))
        .collect();
    for s in nodes.iter_mut().filter(|s| s.kind == StmtKind::Goto) {
        if let Some(l) = &s.label {
            s.jump_target = labels.iter().find(|(name, _)| name == l).map(|&(_, i)| i);
        }
    }

    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.into_iter().enumerate() {
        let kind = match e.kind.as_str() {
            "data" => EdgeKind::Data,
            "control" => EdgeKind::Control,
            other => {
                return Err(schema(
                    format!("edges[{i}].kind"),
                    format!("expected \"data\" or \"control\", found {other:?}"),
                ))
            }
        };
        edges.push(PdgEdge {
            src: e.src,
            dst: e.dst,
            kind,
            var: e.var,
        });
    }
    edges.sort();

    let g = Pdg {
        method: doc.method,
        params: doc.params,
        nodes,
        edges,
    };
    if g.nodes.is_empty() {
        return Err(FrontendError::EmptyMethod(g.method));
    }
    g.validate()?;
    Ok(g)
}
