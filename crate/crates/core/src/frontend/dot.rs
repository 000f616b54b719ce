use std::collections::BTreeSet;
use std::fmt::Write;

use super::pdg::{EdgeKind, Pdg, PdgEdge};
use super::FrontendError;

/// Nodes and edges to draw emphasised.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Highlight {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<PdgEdge>,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders `g` as a DOT digraph. Data edges are solid and labelled with
/// their variable, control edges dashed; highlighted items are red and bold.
pub fn export_dot(g: &Pdg, highlight: Option<&Highlight>) -> Result<String, FrontendError> {
    if let Some(h) = highlight {
        if let Some(&n) = h.nodes.iter().find(|&&n| n >= g.len()) {
            return Err(FrontendError::DanglingHighlight(format!("node {n}")));
        }
        if let Some(e) = h.edges.iter().find(|e| g.edges.binary_search(e).is_err()) {
            return Err(FrontendError::DanglingHighlight(format!("edge {e}")));
        }
    }
    let hot_node = |i: usize| highlight.is_some_and(|h| h.nodes.contains(&i));
    let hot_edge = |e: &PdgEdge| highlight.is_some_and(|h| h.edges.contains(e));

    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(&g.method)).unwrap();
    writeln!(out, "  node [shape=box, fontname=\"monospace\"];").unwrap();
    for s in &g.nodes {
        write!(out, "  n{} [label=\"{}: {}\"", s.index, s.index, escape(&s.text)).unwrap();
        if hot_node(s.index) {
            out.push_str(", color=red, penwidth=2");
        }
        out.push_str("];\n");
    }
    for e in &g.edges {
        write!(out, "  n{} -> n{} [", e.src, e.dst).unwrap();
        match e.kind {
            EdgeKind::Data => {
                write!(out, "style=solid, label=\"{}\"", escape(e.var.as_deref().unwrap_or(""))).unwrap()
            }
            EdgeKind::Control => out.push_str("style=dashed"),
        }
        if hot_edge(e) {
            out.push_str(", color=red, penwidth=2");
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    #[test]
    fn single_node() {
        let g = parse_source("void f(){ return; }").unwrap().remove(0);
        let dot = export_dot(&g, None).unwrap();
        assert_eq!(
            dot,
            "digraph \"f\" {\n  node [shape=box, fontname=\"monospace\"];\n  n0 [label=\"0: return;\"];\n}\n"
        );
    }

    #[test]
    fn chain_edges_in_order() {
        let g = parse_source("void f(){ a = 1; b = a; c = b; }").unwrap().remove(0);
        let dot = export_dot(&g, None).unwrap();
        let edges: Vec<_> = dot.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(
            edges,
            ["  n0 -> n1 [style=solid, label=\"a\"];", "  n1 -> n2 [style=solid, label=\"b\"];"]
        );
    }

    #[test]
    fn highlight_marks_exactly_the_given_edges() {
        let g = parse_source("void f(int x){if (x) a = 1; else a = 2; b = a;}").unwrap().remove(0);
        let h = Highlight {
            nodes: BTreeSet::from([0, 1]),
            edges: g.edges[..2].iter().cloned().collect(),
        };
        let dot = export_dot(&g, Some(&h)).unwrap();
        let hot = dot.lines().filter(|l| l.contains("->") && l.contains("color=red")).count();
        assert_eq!(hot, 2);
    }

    #[test]
    fn dangling_highlight_is_rejected() {
        let g = parse_source("void f(){ a = 1; }").unwrap().remove(0);
        let h = Highlight {
            nodes: BTreeSet::from([3]),
            edges: BTreeSet::new(),
        };
        assert!(matches!(export_dot(&g, Some(&h)), Err(FrontendError::DanglingHighlight(_))));
    }

    #[test]
    fn quotes_are_escaped() {
        let g = parse_source("void f(){ puts(\"hi\"); }").unwrap().remove(0);
        assert!(export_dot(&g, None).unwrap().contains(r#"puts(\"hi\");"#));
    }
}
