//! Canonical single-line rendering of token runs.

use super::lexer::{Token, TokenKind};

fn is_value_end(t: &Token) -> bool {
    matches!(t.kind, TokenKind::Ident | TokenKind::Literal(_))
        || t.is(")")
        || t.is("]")
        || (t.kind == TokenKind::Keyword && !is_stmt_keyword(&t.text) && t.text != "sizeof")
}

fn is_stmt_keyword(s: &str) -> bool {
    matches!(s, "if" | "while" | "for" | "return" | "goto" | "else" | "do" | "switch" | "case")
}

/// Whether `tokens[i]` (an operator) is used in prefix position.
fn is_prefix(tokens: &[Token], i: usize) -> bool {
    match i.checked_sub(1).map(|p| &tokens[p]) {
        None => true,
        Some(prev) => {
            if prev.is("++") || prev.is("--") {
                // `a++ - b` vs `- ++a`: postfix if the one before is a value.
                return i < 2 || !is_value_end(&tokens[i - 2]);
            }
            !is_value_end(prev)
        }
    }
}

/// Joins tokens with C-conventional spacing: binary operators spaced,
/// unary and postfix operators tight, no space inside brackets or before
/// `;` and `,`.
pub fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            let prev = &tokens[i - 1];
            if needs_space(tokens, i, prev, t) {
                out.push(' ');
            }
        }
        out.push_str(&t.text);
    }
    out
}

fn needs_space(tokens: &[Token], i: usize, prev: &Token, t: &Token) -> bool {
    let tight_before = [")", "]", ";", ",", ".", "->", "["];
    if tight_before.iter().any(|s| t.is(s)) {
        return false;
    }
    if t.is(":") {
        // label `exit:` vs ternary `a ? b : c`
        return i + 1 < tokens.len();
    }
    if prev.is("(") || prev.is("[") || prev.is(".") || prev.is("->") {
        return false;
    }
    if t.is("(") {
        return prev.kind == TokenKind::Keyword && is_stmt_keyword(&prev.text)
            || prev.kind == TokenKind::Op && !is_prefix(tokens, i - 1)
            || prev.is(",")
            || prev.is(";")
            || prev.is(":");
    }
    if (t.is("++") || t.is("--")) && !is_prefix(tokens, i) {
        return false;
    }
    if prev.kind == TokenKind::Op && is_prefix(tokens, i - 1) && !prev.is("?") {
        return false;
    }
    true
}
