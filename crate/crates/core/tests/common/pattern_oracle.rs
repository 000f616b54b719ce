//! Frequent patterns by exhaustion: every connected edge subset of every
//! graph, canonicalised by trying all vertex permutations.

use std::collections::{BTreeMap, BTreeSet};

use pdgvd::frontend::EdgeKind;
use pdgvd::patterns::{AbstractEdge, AbstractGraph, AbstractNode};
use rand::Rng;

pub type Canon = (Vec<String>, Vec<(usize, usize, EdgeKind)>);

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Lexicographically least (labels, sorted edges) over relabellings.
pub fn canonical(labels: &[String], edges: &[(usize, usize, EdgeKind)]) -> Canon {
    permutations(labels.len())
        .into_iter()
        .map(|p| {
            // p[old] = new
            let mut l = vec![String::new(); labels.len()];
            for (old, &new) in p.iter().enumerate() {
                l[new] = labels[old].clone();
            }
            let mut e: Vec<_> = edges.iter().map(|&(s, d, k)| (p[s], p[d], k)).collect();
            e.sort();
            (l, e)
        })
        .min()
        .unwrap()
}

pub fn canonical_graph(g: &AbstractGraph) -> Canon {
    let labels: Vec<String> = g.nodes.iter().map(|n| n.label.clone()).collect();
    let edges: Vec<_> = g.edges.iter().map(|e| (g.position(e.src).unwrap(), g.position(e.dst).unwrap(), e.kind)).collect();
    canonical(&labels, &edges)
}

fn connected(n: usize, edges: &[(usize, usize, EdgeKind)]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(s, d, _) in edges {
            for (a, b) in [(s, d), (d, s)] {
                if a == v && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    seen.into_iter().all(|x| x)
}

/// Every connected pattern of `sizes` edges with its support.
pub fn brute_force(graphs: &[AbstractGraph], min_support: usize, sizes: (usize, usize)) -> BTreeMap<Canon, usize> {
    let mut support: BTreeMap<Canon, BTreeSet<usize>> = BTreeMap::new();
    for (gi, g) in graphs.iter().enumerate() {
        let m = g.edges.len();
        assert!(m <= 12, "oracle is exponential in edges");
        for bits in 1u32..(1 << m) {
            let k = bits.count_ones() as usize;
            if k < sizes.0 || k > sizes.1 {
                continue;
            }
            let chosen: Vec<&AbstractEdge> = (0..m).filter(|i| bits >> i & 1 == 1).map(|i| &g.edges[i]).collect();
            let verts: BTreeSet<usize> = chosen.iter().flat_map(|e| [e.src, e.dst]).collect();
            let verts: Vec<usize> = verts.into_iter().collect();
            let at = |x: usize| verts.iter().position(|&v| v == x).unwrap();
            let edges: Vec<_> = chosen.iter().map(|e| (at(e.src), at(e.dst), e.kind)).collect();
            if !connected(verts.len(), &edges) {
                continue;
            }
            let labels: Vec<String> = verts.iter().map(|&v| g.nodes[g.position(v).unwrap()].label.clone()).collect();
            support.entry(canonical(&labels, &edges)).or_default().insert(gi);
        }
    }
    support
        .into_iter()
        .map(|(c, s)| (c, s.len()))
        .filter(|&(_, s)| s >= min_support)
        .collect()
}

pub fn graph(method: &str, labels: &[&str], edges: &[(usize, usize, EdgeKind)]) -> AbstractGraph {
    AbstractGraph {
        method: method.into(),
        nodes: labels.iter().enumerate().map(|(i, l)| AbstractNode { index: i, label: l.to_string() }).collect(),
        edges: edges.iter().map(|&(src, dst, kind)| AbstractEdge { src, dst, kind }).collect(),
    }
}

/// A small random multigraph over labels `a`, `b`, `c`.
pub fn random_graph(rng: &mut impl Rng, method: &str, max_nodes: usize, max_edges: usize) -> AbstractGraph {
    let n = rng.gen_range(2..=max_nodes);
    let labels: Vec<&str> = (0..n).map(|_| ["a", "b", "c"][rng.gen_range(0..3)]).collect();
    let m = rng.gen_range(1..=max_edges);
    let edges: Vec<_> = (0..m)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let d = (s + rng.gen_range(1..n)) % n;
            let k = if rng.gen_bool(0.5) { EdgeKind::Data } else { EdgeKind::Control };
            (s, d, k)
        })
        .collect();
    graph(method, &labels, &edges)
}

/// The 3-edge motif: `X -data-> Y -control-> Z`, `X -data-> Z`.
pub fn motif() -> AbstractGraph {
    graph("motif", &["X", "Y", "Z"], &[(0, 1, EdgeKind::Data), (1, 2, EdgeKind::Control), (0, 2, EdgeKind::Data)])
}

/// Ten random graphs; the motif is attached to four of them by one edge
/// from its `X` node to the graph's node 0.
pub fn planted_motif_graphs(rng: &mut impl Rng) -> Vec<AbstractGraph> {
    (0..10)
        .map(|i| {
            let mut g = random_graph(rng, &format!("g{i}"), 4, 5);
            if i % 3 == 0 {
                let base = g.nodes.len();
                for n in motif().nodes {
                    g.nodes.push(AbstractNode { index: base + n.index, label: n.label });
                }
                for e in motif().edges {
                    g.edges.push(AbstractEdge { src: base + e.src, dst: base + e.dst, kind: e.kind });
                }
                g.edges.push(AbstractEdge { src: base, dst: 0, kind: EdgeKind::Control });
            }
            g
        })
        .collect()
}
