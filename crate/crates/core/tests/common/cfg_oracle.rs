//! Brute-force dependence oracles: enumerate simple paths and test the
//! definitions directly. Exponential, so only for graphs of about ten nodes.

use std::collections::BTreeSet;

use pdgvd::frontend::{Branch, Cfg, CfgEdge};
use rand::Rng;

fn succs(c: &Cfg, v: usize) -> Vec<usize> {
    let mut s = c.successors(v).to_vec();
    if v == c.entry() && !s.contains(&c.exit()) {
        s.push(c.exit());
    }
    s
}

/// Every simple path from `from` to EXIT, as node lists.
pub fn paths_to_exit(c: &Cfg, from: usize) -> Vec<Vec<usize>> {
    fn go(c: &Cfg, v: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if v == c.exit() {
            out.push(path.clone());
            return;
        }
        for w in succs(c, v) {
            if !path.contains(&w) {
                path.push(w);
                go(c, w, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(c, from, &mut vec![from], &mut out);
    out
}

/// `s` post-dominates `v`: it lies on every path from `v` to EXIT.
pub fn post_dominates(c: &Cfg, s: usize, v: usize) -> bool {
    paths_to_exit(c, v).iter().all(|p| p.contains(&s))
}

pub fn control_dependences(c: &Cfg) -> BTreeSet<(usize, usize)> {
    let nodes = 0..c.node_count();
    let mut out = BTreeSet::new();
    for p in nodes.clone() {
        for t in nodes.clone() {
            if t == c.exit() || post_dominates(c, t, p) {
                continue;
            }
            if succs(c, p).into_iter().any(|s| post_dominates(c, t, s)) {
                out.insert((p, t));
            }
        }
    }
    out
}

/// `(d, u, v)` whenever some path leaves `d` and reaches `u` without passing
/// through another definition of `v` on the way.
pub fn data_dependences(
    c: &Cfg,
    defs: &[BTreeSet<String>],
    uses: &[BTreeSet<String>],
) -> BTreeSet<(usize, usize, String)> {
    fn reaches(
        c: &Cfg,
        v: usize,
        target: usize,
        var: &str,
        defs: &[BTreeSet<String>],
        seen: &mut Vec<usize>,
    ) -> bool {
        for w in c.successors(v).iter().copied() {
            if w == target {
                return true;
            }
            if w >= defs.len() || seen.contains(&w) || defs[w].contains(var) {
                continue;
            }
            seen.push(w);
            let hit = reaches(c, w, target, var, defs, seen);
            seen.pop();
            if hit {
                return true;
            }
        }
        false
    }
    let n = c.statement_count();
    let mut out = BTreeSet::new();
    for d in 0..n {
        for var in &defs[d] {
            for u in 0..n {
                if uses[u].contains(var) && reaches(c, d, u, var, defs, &mut Vec::new()) {
                    out.insert((d, u, var.clone()));
                }
            }
        }
    }
    out
}

/// Random CFG over `n` statements (so `n + 2` nodes) with random def/use
/// sets drawn from a three-variable pool.
pub fn random_cfg(
    rng: &mut impl Rng,
    n: usize,
) -> (Cfg, Vec<BTreeSet<String>>, Vec<BTreeSet<String>>) {
    let (entry, exit) = (n, n + 1);
    let mut edges = vec![CfgEdge { from: entry, to: 0, branch: Branch::Seq }];
    for v in 0..n {
        let fanout = if rng.gen_bool(0.35) { 2 } else { 1 };
        for k in 0..fanout {
            let to = if rng.gen_bool(0.15) { exit } else { rng.gen_range(0..n) };
            let branch = match (fanout, k) {
                (1, _) => Branch::Seq,
                (_, 0) => Branch::True,
                _ => Branch::False,
            };
            edges.push(CfgEdge { from: v, to, branch });
        }
    }
    let vars = ["a", "b", "c"];
    let mut pick = |p: f64| -> BTreeSet<String> {
        vars.iter().filter(|_| rng.gen_bool(p)).map(|s| s.to_string()).collect()
    };
    let defs: Vec<_> = (0..n).map(|_| pick(0.3)).collect();
    let uses: Vec<_> = (0..n).map(|_| pick(0.4)).collect();
    (Cfg::from_edges(n, edges), defs, uses)
}
