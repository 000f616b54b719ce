//! Synthetic methods with a known vulnerable statement.
//!
//! Each pair shares one random body. The vulnerable copy runs a sink (a
//! copy, an indexed store, a dereference or a division) on a value it
//! never checks; the clean twin clamps the value right before the sink.
//! The fix of the vulnerable copy is that added clamp, so its fix lines
//! are the statements that depend on the clamp in the clean twin, mapped
//! back to the vulnerable copy. Both twins may re-check the value after
//! the sink, which is too late to matter.

use std::collections::BTreeSet;

use pdgvd_autodiff::{seeded, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{CorpusEntry, FixLines, Label};
use crate::frontend::parse_source;

struct Template {
    name: &'static str,
    vars: &'static [&'static str],
    setup: &'static str,
    guard: &'static str,
    sink: &'static str,
}

/// `$` is replaced by the template's variable.
pub const TEMPLATES: [(&str, &str); 4] = [
    ("copy", "memcpy(buf, req->data, $);"),
    ("index", "table[$] = req->value;"),
    ("null", "head = $->next;"),
    ("divide", "avg = total / $;"),
];

const T: [Template; 4] = [
    Template {
        name: "copy",
        vars: &["len", "nbytes", "size_in", "count_in"],
        setup: "int $ = req->size;",
        guard: "if ($ > MAX_BUF) $ = MAX_BUF;",
        sink: TEMPLATES[0].1,
    },
    Template {
        name: "index",
        vars: &["idx", "slot", "pos", "entry"],
        setup: "int $ = lookup_slot(req);",
        guard: "if ($ >= TABLE_SIZE) $ = TABLE_SIZE - 1;",
        sink: TEMPLATES[1].1,
    },
    Template {
        name: "null",
        vars: &["node", "item", "elem", "obj"],
        setup: "struct node *$ = kmalloc(sizeof(struct node), GFP_KERNEL);",
        guard: "if ($ == NULL) $ = &fallback_node;",
        sink: TEMPLATES[2].1,
    },
    Template {
        name: "divide",
        vars: &["divisor", "nitems", "samples", "width"],
        setup: "int $ = req->count;",
        guard: "if ($ == 0) $ = DEFAULT_COUNT;",
        sink: TEMPLATES[3].1,
    },
];

const LOCALS: [&str; 6] = ["flags", "total", "mode", "offset", "status", "tmp"];
const HELPERS: [&str; 5] = ["read_reg", "compute_crc", "get_flags", "lookup_mode", "next_offset"];
const NAMES: [&str; 8] = ["handle", "process", "update", "dev", "ioctl", "write", "fill", "parse"];
const NOUNS: [&str; 8] = ["request", "buffer", "entry", "frame", "packet", "record", "queue", "table"];

fn filler(rng: &mut Rng) -> String {
    let v = *LOCALS.choose(rng).unwrap();
    let w = *LOCALS.choose(rng).unwrap();
    let h = *HELPERS.choose(rng).unwrap();
    let k: u32 = rng.gen_range(1..64);
    match rng.gen_range(0..10) {
        0 => format!("{v} = {w} + {k};"),
        1 => format!("{v} = {h}({w});"),
        2 => format!("log_debug({v});"),
        3 => format!("if ({v} > {k}) {v} = {v} - {k};"),
        4 => format!("while ({v} < {k}) {v} = {v} + 1;"),
        5 => format!("for (i = 0; i < {k}; i++) {v} = {v} + i;"),
        6 => format!("{v} = {v} | {k};"),
        // Guards on unrelated values, so a guard alone says nothing.
        7 => {
            let g = T.choose(rng).unwrap().guard;
            g.replace('$', v)
        }
        // Sinks whose operands are constants or globals.
        _ => match rng.gen_range(0..4) {
            0 => format!("memcpy(buf, hdr, {k});"),
            1 => format!("table[{k}] = {v};"),
            2 => "head = cur_node->next;".to_string(),
            _ => format!("avg = total / {k};"),
        },
    }
}

struct Pair {
    vulnerable: String,
    clean: String,
    /// Lines of the vulnerable copy that depend on the clamp in the twin.
    fix: BTreeSet<usize>,
}

/// Lines of statements joined by an edge to a statement on `line`, in
/// the first method of `src`.
fn dependents_of_line(src: &str, line: usize) -> BTreeSet<usize> {
    let g = parse_source(src).expect("planted methods parse").remove(0);
    let on_line = |i: usize| g.nodes[i].line == line;
    g.edges
        .iter()
        .filter_map(|e| match (on_line(e.src), on_line(e.dst)) {
            (true, false) => Some(g.nodes[e.dst].line),
            (false, true) => Some(g.nodes[e.src].line),
            _ => None,
        })
        .collect()
}

fn pair(rng: &mut Rng, id: usize) -> (Pair, &'static str) {
    let t = T.choose(rng).unwrap();
    let var = *t.vars.choose(rng).unwrap();
    let fill = |s: &str| s.replace('$', var);
    let name = format!(
        "{}_{}_{id}",
        NAMES.choose(rng).unwrap(),
        NOUNS.choose(rng).unwrap()
    );
    let before: Vec<String> = (0..rng.gen_range(1..4)).map(|_| filler(rng)).collect();
    let between: Vec<String> = (0..rng.gen_range(0..3)).map(|_| filler(rng)).collect();
    let mut after: Vec<String> = (0..rng.gen_range(1..4)).map(|_| filler(rng)).collect();
    // A late check of the same value, after the sink, guards nothing; only
    // its position separates it from the fix.
    if rng.gen_bool(0.3) {
        let at = rng.gen_range(0..=after.len());
        after.insert(at, fill(t.guard));
    }

    let build = |guarded: bool| -> (String, usize) {
        let mut lines = vec![
            format!("int {name}(struct request *req, char *buf)"),
            "{".to_string(),
            "\tint flags = req->flags;".to_string(),
            "\tint total = 0;".to_string(),
            "\tint i;".to_string(),
        ];
        lines.extend(before.iter().map(|s| format!("\t{s}")));
        lines.push(format!("\t{}", fill(t.setup)));
        lines.extend(between.iter().map(|s| format!("\t{s}")));
        let guard_line = lines.len() + 1;
        if guarded {
            lines.push(format!("\t{}", fill(t.guard)));
        }
        lines.push(format!("\t{}", fill(t.sink)));
        lines.extend(after.iter().map(|s| format!("\t{s}")));
        lines.push("\treturn total;".to_string());
        lines.push("}".to_string());
        (lines.join("\n") + "\n", guard_line)
    };
    let (vulnerable, _) = build(false);
    let (clean, guard_line) = build(true);
    let fix = dependents_of_line(&clean, guard_line)
        .into_iter()
        .map(|l| if l > guard_line { l - 1 } else { l })
        .collect();
    (
        Pair {
            vulnerable,
            clean,
            fix,
        },
        t.name,
    )
}

/// `n_methods` entries, vulnerable and clean alternating, from pairs of
/// twins; an odd count ends with one extra clean method.
///
/// # Panics
/// If `n_methods < 20`.
pub fn generate_planted_corpus(n_methods: usize, seed: u64) -> Vec<CorpusEntry> {
    assert!(n_methods >= 20, "planted corpora need at least 20 methods");
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n_methods);
    let mut id = 0;
    while out.len() < n_methods {
        let (p, template) = pair(&mut rng, id);
        out.push(CorpusEntry {
            id: format!("{template}-{id:04}-v"),
            source: Some(p.vulnerable),
            pdg: None,
            label: Label::V,
            fix: Some(FixLines {
                changed: BTreeSet::new(),
                added: p.fix,
            }),
        });
        if out.len() < n_methods {
            out.push(CorpusEntry {
                id: format!("{template}-{id:04}-nv"),
                source: Some(p.clean),
                pdg: None,
                label: Label::NV,
                fix: None,
            });
        }
        if out.len() == n_methods - 1 && n_methods % 2 == 1 {
            let (p, template) = pair(&mut rng, id + 1);
            out.push(CorpusEntry {
                id: format!("{template}-{:04}-nv", id + 1),
                source: Some(p.clean),
                pdg: None,
                label: Label::NV,
                fix: None,
            });
        }
        id += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_and_fix_lines() {
        let c = generate_planted_corpus(100, 7);
        assert_eq!(c.len(), 100);
        assert_eq!(c.iter().filter(|e| e.is_vulnerable()).count(), 50);
        assert!(c.iter().filter(|e| e.is_vulnerable()).all(|e| e.is_interpretable()));
        assert_eq!(generate_planted_corpus(21, 1).len(), 21);
    }

    #[test]
    fn every_method_parses_and_the_fix_covers_the_sink() {
        for e in generate_planted_corpus(60, 2) {
            let g = e.graph().unwrap_or_else(|err| panic!("{}: {err}", e.id));
            if let Some(t) = e.ground_truth(&g) {
                assert!(t.deleted_or_modified.is_empty());
                let texts: Vec<&str> = t.added_dependents.iter().map(|&i| g.nodes[i].text.as_str()).collect();
                let sinks = ["memcpy(", "table[", "->next", "total /"];
                assert!(texts.iter().any(|s| sinks.iter().any(|k| s.contains(k))), "{}: {texts:?}", e.id);
            }
        }
    }

    #[test]
    fn twins_differ_only_by_the_guard() {
        let c = generate_planted_corpus(20, 5);
        for w in c.chunks(2) {
            let v: Vec<&str> = w[0].source.as_deref().unwrap().lines().collect();
            let n: Vec<&str> = w[1].source.as_deref().unwrap().lines().collect();
            assert_eq!(n.len(), v.len() + 1);
            let at = (0..v.len()).find(|&i| v[i] != n[i]).unwrap();
            assert!(n[at].trim_start().starts_with("if ("));
            assert_eq!(v[at..], n[at + 1..]);
        }
    }
}
