//! gSpan over directed multigraphs. An edge's label is its kind plus its
//! direction relative to the DFS traversal, so the undirected machinery
//! (rightmost extension, minimum DFS codes) carries over. Backward edges
//! may close onto the parent, which covers parallel edges.

use std::collections::{BTreeMap, BTreeSet};

use super::{AbstractEdge, AbstractGraph, AbstractNode, Pattern, PatternError, MAX_PATTERN_EDGES};
use crate::frontend::EdgeKind;

type Label = u32;

/// `kind * 2 + dir`, dir 0 when the graph edge runs from the DFS `from`
/// vertex to `to`.
type EdgeLabel = u8;

fn edge_label(kind: EdgeKind, outgoing: bool) -> EdgeLabel {
    let k = match kind {
        EdgeKind::Data => 0,
        EdgeKind::Control => 1,
    };
    k * 2 + u8::from(!outgoing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DfsEdge {
    from: usize,
    to: usize,
    lf: Label,
    le: EdgeLabel,
    lt: Label,
}

impl DfsEdge {
    fn is_forward(&self) -> bool {
        self.from < self.to
    }
}

/// Order among the extensions of one code: backward before forward,
/// backward by target, forward from the deepest rightmost-path vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ExtKey {
    forward: bool,
    anchor: usize,
    le: EdgeLabel,
    lt: Label,
}

impl ExtKey {
    fn of(e: &DfsEdge) -> Self {
        if e.is_forward() {
            ExtKey { forward: true, anchor: usize::MAX - e.from, le: e.le, lt: e.lt }
        } else {
            ExtKey { forward: false, anchor: e.to, le: e.le, lt: e.lt }
        }
    }
}

struct Adj {
    to: usize,
    edge: usize,
    le: EdgeLabel,
}

struct Graph {
    labels: Vec<Label>,
    adj: Vec<Vec<Adj>>,
}

impl Graph {
    fn new(labels: Vec<Label>, edges: &[(usize, usize, EdgeKind)]) -> Self {
        let mut adj: Vec<Vec<Adj>> = (0..labels.len()).map(|_| Vec::new()).collect();
        for (id, &(s, d, k)) in edges.iter().enumerate() {
            adj[s].push(Adj { to: d, edge: id, le: edge_label(k, true) });
            adj[d].push(Adj { to: s, edge: id, le: edge_label(k, false) });
        }
        Graph { labels, adj }
    }
}

#[derive(Clone)]
struct Embedding {
    graph: usize,
    /// Pattern vertex to graph vertex.
    vertices: Vec<usize>,
    edges: Vec<usize>,
}

fn rightmost_path(code: &[DfsEdge]) -> Vec<usize> {
    let rm = code.iter().map(|e| e.from.max(e.to)).max().unwrap_or(0);
    let mut path = vec![rm];
    let mut cur = rm;
    while cur != 0 {
        let parent = code.iter().find(|e| e.is_forward() && e.to == cur).map(|e| e.from).expect("tree edge");
        path.push(parent);
        cur = parent;
    }
    path
}

/// Every rightmost extension of `code`, grouped and ordered.
fn extensions(graphs: &[Graph], code: &[DfsEdge], embeddings: &[Embedding]) -> BTreeMap<ExtKey, (DfsEdge, Vec<Embedding>)> {
    let path = rightmost_path(code);
    let rm = path[0];
    let next = rm.max(code.iter().map(|e| e.to).max().unwrap_or(0)) + 1;
    let mut out: BTreeMap<ExtKey, (DfsEdge, Vec<Embedding>)> = BTreeMap::new();
    let mut push = |e: DfsEdge, emb: Embedding| {
        out.entry(ExtKey::of(&e)).or_insert_with(|| (e, Vec::new())).1.push(emb);
    };
    for emb in embeddings {
        let g = &graphs[emb.graph];
        let lab = |v: usize| g.labels[emb.vertices[v]];
        for a in &g.adj[emb.vertices[rm]] {
            if emb.edges.contains(&a.edge) {
                continue;
            }
            if let Some(&v) = path[1..].iter().find(|&&v| emb.vertices[v] == a.to) {
                let mut e = emb.clone();
                e.edges.push(a.edge);
                push(DfsEdge { from: rm, to: v, lf: lab(rm), le: a.le, lt: lab(v) }, e);
            }
        }
        for &u in &path {
            for a in &g.adj[emb.vertices[u]] {
                if emb.vertices.contains(&a.to) {
                    continue;
                }
                let mut e = emb.clone();
                e.vertices.push(a.to);
                e.edges.push(a.edge);
                push(DfsEdge { from: u, to: next, lf: lab(u), le: a.le, lt: g.labels[a.to] }, e);
            }
        }
    }
    out
}

fn first_edges(graphs: &[Graph]) -> BTreeMap<(Label, EdgeLabel, Label), Vec<Embedding>> {
    let mut out: BTreeMap<_, Vec<Embedding>> = BTreeMap::new();
    for (gi, g) in graphs.iter().enumerate() {
        for (u, adj) in g.adj.iter().enumerate() {
            for a in adj {
                out.entry((g.labels[u], a.le, g.labels[a.to])).or_default().push(Embedding {
                    graph: gi,
                    vertices: vec![u, a.to],
                    edges: vec![a.edge],
                });
            }
        }
    }
    out
}

fn code_graph(code: &[DfsEdge]) -> Graph {
    let n = code.iter().map(|e| e.from.max(e.to)).max().map_or(0, |m| m + 1);
    let mut labels = vec![0; n];
    let mut edges = Vec::with_capacity(code.len());
    for e in code {
        labels[e.from] = e.lf;
        labels[e.to] = e.lt;
        let kind = if e.le / 2 == 0 { EdgeKind::Data } else { EdgeKind::Control };
        if e.le % 2 == 0 {
            edges.push((e.from, e.to, kind));
        } else {
            edges.push((e.to, e.from, kind));
        }
    }
    Graph::new(labels, &edges)
}

/// Whether `code` is the minimum DFS code of the graph it describes.
fn is_min(code: &[DfsEdge]) -> bool {
    let g = [code_graph(code)];
    let (first, mut embs) = first_edges(&g).into_iter().next().expect("non-empty code");
    if first < (code[0].lf, code[0].le, code[0].lt) {
        return false;
    }
    let mut prefix = vec![code[0]];
    for want in &code[1..] {
        let exts = extensions(&g, &prefix, &embs);
        let (key, (edge, next)) = exts.into_iter().next().expect("the code's own edge extends it");
        if key < ExtKey::of(want) {
            return false;
        }
        prefix.push(edge);
        embs = next;
    }
    true
}

struct Miner<'a> {
    graphs: Vec<Graph>,
    names: Vec<String>,
    methods: Vec<&'a str>,
    min_support: usize,
    sizes: (usize, usize),
    out: Vec<(Vec<DfsEdge>, BTreeSet<usize>)>,
}

impl Miner<'_> {
    fn support(embs: &[Embedding]) -> BTreeSet<usize> {
        embs.iter().map(|e| e.graph).collect()
    }

    fn grow(&mut self, code: &mut Vec<DfsEdge>, embs: &[Embedding]) {
        let support = Self::support(embs);
        if support.len() < self.min_support || !is_min(code) {
            return;
        }
        if code.len() >= self.sizes.0 {
            self.out.push((code.clone(), support));
        }
        if code.len() == self.sizes.1 {
            return;
        }
        for (_, (edge, next)) in extensions(&self.graphs, code, embs) {
            code.push(edge);
            self.grow(code, &next);
            code.pop();
        }
    }

    fn render(&self, code: &[DfsEdge]) -> String {
        code.iter()
            .map(|e| {
                let kind = if e.le / 2 == 0 { "data" } else { "control" };
                let arrow = if e.le % 2 == 0 { ">" } else { "<" };
                format!(
                    "({},{},{},{kind}{arrow},{})",
                    e.from, e.to, self.names[e.lf as usize], self.names[e.lt as usize]
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn pattern(&self, code: &[DfsEdge], support: &BTreeSet<usize>) -> Pattern {
        let g = code_graph(code);
        let nodes = g
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| AbstractNode { index: i, label: self.names[l as usize].clone() })
            .collect();
        let edges = code
            .iter()
            .map(|e| {
                let kind = if e.le / 2 == 0 { EdgeKind::Data } else { EdgeKind::Control };
                let (src, dst) = if e.le % 2 == 0 { (e.from, e.to) } else { (e.to, e.from) };
                AbstractEdge { src, dst, kind }
            })
            .collect();
        let mut sources: Vec<String> = support.iter().map(|&i| self.methods[i].to_string()).collect();
        sources.sort();
        Pattern {
            code: self.render(code),
            support: support.len(),
            size: code.len(),
            graph: AbstractGraph { method: String::new(), nodes, edges },
            sources,
        }
    }
}

/// Connected patterns with `sizes.0..=sizes.1` edges found in at least
/// `min_support` of the graphs (each graph counts once), by support
/// descending then canonical code.
pub fn mine_patterns(graphs: &[AbstractGraph], min_support: usize, sizes: (usize, usize)) -> Result<Vec<Pattern>, PatternError> {
    if min_support < 2 {
        return Err(PatternError::SupportTooLow(min_support));
    }
    if sizes.0 < 1 || sizes.0 > sizes.1 || sizes.1 > MAX_PATTERN_EDGES {
        return Err(PatternError::BadSizeRange(sizes.0, sizes.1));
    }
    // label ids in string order, so codes compare the same for any input order
    let names: Vec<String> = graphs
        .iter()
        .flat_map(|g| g.nodes.iter().map(|n| n.label.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id = |s: &str| names.binary_search_by(|n| n.as_str().cmp(s)).expect("label interned") as Label;
    let internal: Vec<Graph> = graphs
        .iter()
        .map(|g| {
            let labels = g.nodes.iter().map(|n| id(&n.label)).collect();
            let edges: Vec<_> = g
                .edges
                .iter()
                .filter_map(|e| Some((g.position(e.src)?, g.position(e.dst)?, e.kind)))
                .collect();
            Graph::new(labels, &edges)
        })
        .collect();
    let mut miner = Miner {
        graphs: internal,
        names: names.clone(),
        methods: graphs.iter().map(|g| g.method.as_str()).collect(),
        min_support,
        sizes,
        out: Vec::new(),
    };
    for ((lf, le, lt), embs) in first_edges(&miner.graphs) {
        let mut code = vec![DfsEdge { from: 0, to: 1, lf, le, lt }];
        miner.grow(&mut code, &embs);
    }
    let found = std::mem::take(&mut miner.out);
    let mut patterns: Vec<Pattern> = found.iter().map(|(c, s)| miner.pattern(c, s)).collect();
    patterns.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.code.cmp(&b.code)));
    Ok(patterns)
}
