use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use super::ast::MethodAst;
use super::cfg::Cfg;

/// Post-dominator sets, reflexive: `pdom[v]` holds every node that lies on
/// all paths from `v` to EXIT. ENTRY is treated as having an extra edge to
/// EXIT.
pub fn post_dominators(c: &Cfg) -> Vec<FixedBitSet> {
    let size = c.node_count();
    let exit = c.exit();
    let mut full = FixedBitSet::with_capacity(size);
    full.insert_range(..);
    let mut pdom = vec![full; size];
    pdom[exit].clear();
    pdom[exit].insert(exit);

    let succs = |v: usize| -> Vec<usize> {
        let mut s = c.successors(v).to_vec();
        if v == c.entry() && !s.contains(&exit) {
            s.push(exit);
        }
        s
    };

    let mut changed = true;
    while changed {
        changed = false;
        // Reverse index order tends to visit successors first.
        for v in (0..size).rev() {
            if v == exit {
                continue;
            }
            let mut next = FixedBitSet::with_capacity(size);
            let mut first = true;
            for s in succs(v) {
                if first {
                    next.clone_from(&pdom[s]);
                    first = false;
                } else {
                    next.intersect_with(&pdom[s]);
                }
            }
            next.insert(v);
            if next != pdom[v] {
                pdom[v] = next;
                changed = true;
            }
        }
    }
    pdom
}

/// Pairs `(p, s)` such that `s` post-dominates some successor of `p` but
/// does not post-dominate `p`. May include ENTRY as `p`.
pub fn control_dependences(c: &Cfg) -> BTreeSet<(usize, usize)> {
    let pdom = post_dominators(c);
    let mut out = BTreeSet::new();
    for p in 0..c.node_count() {
        let mut succs = c.successors(p).to_vec();
        if p == c.entry() && !succs.contains(&c.exit()) {
            succs.push(c.exit());
        }
        if succs.len() < 2 {
            continue;
        }
        for s in succs {
            for t in pdom[s].ones() {
                if !pdom[p].contains(t) && t != c.exit() {
                    out.insert((p, t));
                }
            }
        }
    }
    out
}

/// Reaching definitions over per-node def/use sets. Returns
/// `(def_stmt, use_stmt, var)` triples, self-pairs included.
pub fn reaching_definitions(
    c: &Cfg,
    defs: &[BTreeSet<String>],
    uses: &[BTreeSet<String>],
) -> BTreeSet<(usize, usize, String)> {
    let n = c.statement_count();
    let sites: Vec<(usize, &String)> = (0..n).flat_map(|s| defs[s].iter().map(move |v| (s, v))).collect();
    let m = sites.len();
    let mut gen = vec![FixedBitSet::with_capacity(m); n + 2];
    let mut kill = vec![FixedBitSet::with_capacity(m); n + 2];
    for (k, &(s, v)) in sites.iter().enumerate() {
        gen[s].insert(k);
        for &(t, w) in &sites {
            if w == v && t != s {
                kill[t].insert(k);
            }
        }
    }

    let mut reach_in = vec![FixedBitSet::with_capacity(m); n + 2];
    let mut reach_out = vec![FixedBitSet::with_capacity(m); n + 2];
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..n + 2 {
            let mut inset = FixedBitSet::with_capacity(m);
            for &p in c.predecessors(v) {
                inset.union_with(&reach_out[p]);
            }
            let mut out = inset.clone();
            out.difference_with(&kill[v]);
            out.union_with(&gen[v]);
            reach_in[v] = inset;
            if out != reach_out[v] {
                reach_out[v] = out;
                changed = true;
            }
        }
    }

    let mut result = BTreeSet::new();
    for u in 0..n {
        for k in reach_in[u].ones() {
            let (d, var) = sites[k];
            if uses[u].contains(var) {
                result.insert((d, u, var.clone()));
            }
        }
    }
    result
}

pub fn data_dependences(m: &MethodAst, c: &Cfg) -> BTreeSet<(usize, usize, String)> {
    let defs: Vec<_> = m.body.iter().map(|s| s.defs.clone()).collect();
    let uses: Vec<_> = m.body.iter().map(|s| s.uses.clone()).collect();
    reaching_definitions(c, &defs, &uses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{build_cfg, parse_method, tokenize};

    fn method(src: &str) -> (MethodAst, Cfg) {
        let m = parse_method(&tokenize(src).unwrap()).unwrap();
        let c = build_cfg(&m).unwrap();
        (m, c)
    }

    fn stmt_cd(c: &Cfg) -> BTreeSet<(usize, usize)> {
        control_dependences(c)
            .into_iter()
            .filter(|&(p, _)| p < c.statement_count())
            .collect()
    }

    #[test]
    fn straight_line_has_no_control_dependences() {
        let (_, c) = method("void f(){a = 1; b = a; c = b;}");
        assert!(stmt_cd(&c).is_empty());
        // everything hangs off ENTRY
        assert_eq!(control_dependences(&c).len(), 3);
    }

    #[test]
    fn diamond_arms_depend_on_predicate() {
        let (_, c) = method("void f(int x){if (x) a = 1; else a = 2; b = a;}");
        assert_eq!(stmt_cd(&c), BTreeSet::from([(0, 1), (0, 2)]));
    }

    #[test]
    fn goto_depends_on_guard() {
        let (_, c) = method("int f(){ ret = g(); if (ret < 0) goto exit; ret = 1; exit: return ret; }");
        assert_eq!(stmt_cd(&c), BTreeSet::from([(1, 2), (1, 3)]));
    }

    #[test]
    fn single_def_use() {
        let (m, c) = method("void f(){a = 1; b = a;}");
        assert_eq!(data_dependences(&m, &c), BTreeSet::from([(0, 1, "a".to_string())]));
    }

    #[test]
    fn redefinition_kills() {
        let (m, c) = method("void f(){a = 1; a = 2; b = a;}");
        assert_eq!(data_dependences(&m, &c), BTreeSet::from([(1, 2, "a".to_string())]));
    }

    #[test]
    fn both_arm_definitions_reach_the_join() {
        let (m, c) = method("void f(int x){if (x) a = 1; else a = 2; b = a;}");
        let dd = data_dependences(&m, &c);
        assert!(dd.contains(&(1, 3, "a".to_string())));
        assert!(dd.contains(&(2, 3, "a".to_string())));
    }

    #[test]
    fn loop_carried_definition() {
        let (m, c) = method("void f(int n){ i = 0; while (i < n) i = i + 1; }");
        let dd = data_dependences(&m, &c);
        assert!(dd.contains(&(0, 1, "i".to_string())));
        assert!(dd.contains(&(2, 1, "i".to_string())));
        assert!(dd.contains(&(2, 2, "i".to_string())));
    }
}
