//! Mini-C frontend: tokens, per-method ASTs, CFGs, dependences and PDGs.

mod ast;
mod cfg;
mod deps;
mod dot;
mod json;
mod lexer;
mod parser;
mod pdg;
mod render;

pub use ast::{declared_type_in, Ast, MethodAst, Param, Stmt, StmtKind, StmtNode};
pub use cfg::{build_cfg, Branch, Cfg, CfgEdge};
pub use deps::{control_dependences, data_dependences, post_dominators, reaching_definitions};
pub use dot::{export_dot, Highlight};
pub use json::{export_pdg_json, import_pdg_json, pdg_to_json};
pub use lexer::{tokenize, LitKind, Token, TokenKind, KEYWORDS};
pub use parser::{parse_method, parse_program};
pub use pdg::{build_pdg, parse_source, EdgeKind, Pdg, PdgEdge};
pub use render::render_tokens;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{line}:{col}: unterminated comment")]
    UnterminatedComment { line: usize, col: usize },
    #[error("{line}:{col}: unterminated string or character literal")]
    UnterminatedString { line: usize, col: usize },
    #[error("{line}:{col}: illegal character {ch:?}")]
    IllegalCharacter { ch: char, line: usize, col: usize },
    #[error("{line}:{col}: expected one of {expected:?}, found `{found}`")]
    SyntaxError {
        line: usize,
        col: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{col}: unsupported construct: {what}")]
    UnsupportedConstruct { line: usize, col: usize, what: String },
    #[error("goto target `{0}` has no matching label")]
    UnresolvedLabel(String),
    #[error("method `{0}` has no statements")]
    EmptyMethod(String),
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("invariant violated by edge {edge}: {message}")]
    InvariantViolation { edge: String, message: String },
    #[error("highlight references {0}, which is not in the graph")]
    DanglingHighlight(String),
}
