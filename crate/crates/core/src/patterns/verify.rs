//! Embedding check by plain backtracking, kept apart from the miner so it
//! can vouch for it.

use std::collections::BTreeMap;

use super::AbstractGraph;
use crate::frontend::EdgeKind;

type Multiset = BTreeMap<(usize, usize, EdgeKind), usize>;

fn edge_counts(g: &AbstractGraph) -> Multiset {
    let mut m = Multiset::new();
    for e in &g.edges {
        if let (Some(s), Some(d)) = (g.position(e.src), g.position(e.dst)) {
            *m.entry((s, d, e.kind)).or_default() += 1;
        }
    }
    m
}

/// Whether `pattern` maps into `target`: an injective node map preserving
/// labels, with every pattern edge (counted with multiplicity) present
/// between the images in the same direction and kind.
pub fn has_embedding(pattern: &AbstractGraph, target: &AbstractGraph) -> bool {
    let p = edge_counts(pattern);
    let t = edge_counts(target);
    let mut map = vec![usize::MAX; pattern.nodes.len()];
    let mut used = vec![false; target.nodes.len()];
    assign(0, pattern, target, &p, &t, &mut map, &mut used)
}

fn consistent(upto: usize, p: &Multiset, t: &Multiset, map: &[usize]) -> bool {
    p.iter().all(|(&(s, d, k), &n)| {
        if s > upto || d > upto || (s != upto && d != upto) {
            return true;
        }
        t.get(&(map[s], map[d], k)).copied().unwrap_or(0) >= n
    })
}

fn assign(i: usize, pattern: &AbstractGraph, target: &AbstractGraph, p: &Multiset, t: &Multiset, map: &mut [usize], used: &mut [bool]) -> bool {
    if i == pattern.nodes.len() {
        return true;
    }
    for c in 0..target.nodes.len() {
        if used[c] || target.nodes[c].label != pattern.nodes[i].label {
            continue;
        }
        map[i] = c;
        used[c] = true;
        if consistent(i, p, t, map) && assign(i + 1, pattern, target, p, t, map, used) {
            return true;
        }
        used[c] = false;
    }
    map[i] = usize::MAX;
    false
}

/// Number of `graphs` containing `pattern`.
pub fn verified_support(pattern: &AbstractGraph, graphs: &[AbstractGraph]) -> usize {
    graphs.iter().filter(|g| has_embedding(pattern, g)).count()
}
