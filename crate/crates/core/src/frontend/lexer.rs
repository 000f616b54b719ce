use std::fmt;

use serde::{Deserialize, Serialize};

use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LitKind {
    Int,
    Str,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Ident,
    Keyword,
    Literal(LitKind),
    Punct,
    Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub col: usize,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        self.text == text && !matches!(self.kind, TokenKind::Literal(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            TokenKind::Ident => "id",
            TokenKind::Keyword => "kw",
            TokenKind::Literal(_) => "lit",
            TokenKind::Punct => "punct",
            TokenKind::Op => "op",
        };
        write!(f, "{tag}:{}", self.text)
    }
}

pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while",
];

const PUNCT: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', ':'];

// Longest first so maximal munch falls out of a linear scan.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~",
    "&", "|", "^", "?", ".",
];

/// Splits mini-C source into tokens, dropping whitespace and comments.
pub fn tokenize(source: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, 2);
            loop {
                if i >= chars.len() {
                    return Err(FrontendError::UnterminatedComment {
                        line: start_line,
                        col: start_col,
                    });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, 2);
                    break;
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let push = |tokens: &mut Vec<Token>, kind, text: String| {
            tokens.push(Token {
                kind,
                text,
                line: start_line,
                col: start_col,
            })
        };
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            let kind = if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            };
            push(&mut tokens, kind, text);
            let len = j - i;
            advance(&mut i, &mut line, &mut col, len);
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '.') {
                j += 1;
            }
            push(
                &mut tokens,
                TokenKind::Literal(LitKind::Int),
                chars[i..j].iter().collect(),
            );
            let len = j - i;
            advance(&mut i, &mut line, &mut col, len);
            continue;
        }
        if c == '"' || c == '\'' {
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => {
                        return Err(FrontendError::UnterminatedString {
                            line: start_line,
                            col: start_col,
                        })
                    }
                    Some('\\') => j += 2,
                    Some(&q) if q == c => break,
                    Some(_) => j += 1,
                }
            }
            let kind = if c == '"' { LitKind::Str } else { LitKind::Char };
            push(
                &mut tokens,
                TokenKind::Literal(kind),
                chars[i..=j].iter().collect(),
            );
            let len = j + 1 - i;
            advance(&mut i, &mut line, &mut col, len);
            continue;
        }
        if PUNCT.contains(&c) {
            push(&mut tokens, TokenKind::Punct, c.to_string());
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if let Some(op) = OPERATORS.iter().find(|op| {
            op.chars()
                .enumerate()
                .all(|(k, oc)| chars.get(i + k) == Some(&oc))
        }) {
            push(&mut tokens, TokenKind::Op, op.to_string());
            advance(&mut i, &mut line, &mut col, op.len());
            continue;
        }
        return Err(FrontendError::IllegalCharacter {
            ch: c,
            line: start_line,
            col: start_col,
        });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shown(src: &str) -> Vec<String> {
        tokenize(src).unwrap().iter().map(ToString::to_string).collect()
    }

    #[test]
    fn if_return() {
        assert_eq!(
            shown("if (x > 0) return;"),
            ["kw:if", "punct:(", "id:x", "op:>", "lit:0", "punct:)", "kw:return", "punct:;"]
        );
    }

    #[test]
    fn arrow_member() {
        assert_eq!(shown("s_cmd->insize"), ["id:s_cmd", "op:->", "id:insize"]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
    }

    #[test]
    fn comments_and_positions() {
        let toks = tokenize("a /* x\n y */ b // z\n  c").unwrap();
        let pos: Vec<_> = toks.iter().map(|t| (t.text.as_str(), t.line, t.col)).collect();
        assert_eq!(pos, [("a", 1, 1), ("b", 2, 7), ("c", 3, 3)]);
    }

    #[test]
    fn literal_kinds() {
        let toks = tokenize(r#"0x1F "a\"b" '\n'"#).unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            [
                TokenKind::Literal(LitKind::Int),
                TokenKind::Literal(LitKind::Str),
                TokenKind::Literal(LitKind::Char)
            ]
        );
    }

    #[test]
    fn unterminated_string_reports_position() {
        assert!(matches!(
            tokenize("x = \"abc"),
            Err(FrontendError::UnterminatedString { line: 1, col: 5 })
        ));
    }

    #[test]
    fn illegal_character_reports_position() {
        assert!(matches!(
            tokenize("a\n @"),
            Err(FrontendError::IllegalCharacter { ch: '@', line: 2, col: 2 })
        ));
    }

    #[test]
    fn maximal_munch() {
        assert_eq!(shown("a<<=b"), ["id:a", "op:<<=", "id:b"]);
    }
}
