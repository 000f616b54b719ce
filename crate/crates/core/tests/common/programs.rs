//! Random structured mini-C programs.

use rand::Rng;

const VARS: [&str; 4] = ["a", "b", "len", "p"];

fn var(rng: &mut impl Rng) -> &'static str {
    VARS[rng.gen_range(0..VARS.len())]
}

fn expr(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..4) {
        0 => var(rng).to_string(),
        1 => format!("{} + {}", var(rng), rng.gen_range(0..9)),
        2 => format!("g({}, {})", var(rng), var(rng)),
        _ => format!("s->{}", var(rng)),
    }
}

fn block(rng: &mut impl Rng, depth: usize, in_loop: bool, out: &mut String) {
    let count = rng.gen_range(1..4);
    for _ in 0..count {
        let choice = if depth >= 2 { rng.gen_range(0..4) } else { rng.gen_range(0..8) };
        match choice {
            0 | 1 => out.push_str(&format!("{} = {};\n", var(rng), expr(rng))),
            2 => out.push_str(&format!("h({}, &{});\n", expr(rng), var(rng))),
            3 if in_loop && rng.gen_bool(0.3) => out.push_str("break;\n"),
            3 => out.push_str(&format!("{}++;\n", var(rng))),
            4 => {
                out.push_str(&format!("if ({} > {}) {{\n", var(rng), expr(rng)));
                block(rng, depth + 1, in_loop, out);
                if rng.gen_bool(0.5) {
                    out.push_str("} else {\n");
                    block(rng, depth + 1, in_loop, out);
                }
                out.push_str("}\n");
            }
            5 => {
                out.push_str(&format!("while ({} < {}) {{\n", var(rng), expr(rng)));
                block(rng, depth + 1, true, out);
                out.push_str("}\n");
            }
            6 => {
                out.push_str(&format!("for ({v} = 0; {v} < {}; {v}++) {{\n", expr(rng), v = var(rng)));
                block(rng, depth + 1, true, out);
                out.push_str("}\n");
            }
            _ => out.push_str(&format!("if ({} == 0)\ngoto out;\n", var(rng))),
        }
    }
}

/// A single function that always parses. Ends with an `out:` label so any
/// generated `goto out;` resolves.
pub fn random_method(rng: &mut impl Rng) -> String {
    let mut body = String::new();
    block(rng, 0, false, &mut body);
    format!("int f(int a, char *p)\n{{\nint b = 0;\n{body}out:\nreturn {};\n}}\n", var(rng))
}
