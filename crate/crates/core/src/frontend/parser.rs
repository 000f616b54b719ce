//! Recursive-descent parser for the mini-C subset (grammar in
//! `docs/grammar.md`), producing one [`MethodAst`] per function with
//! def/use sets filled in.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Ast, MethodAst, Param, Stmt, StmtKind, StmtNode};
use super::lexer::{LitKind, Token, TokenKind};
use super::render::render_tokens;
use super::FrontendError;

const TYPE_KEYWORDS: &[&str] = &[
    "auto", "char", "const", "double", "enum", "extern", "float", "inline", "int", "long",
    "register", "short", "signed", "static", "struct", "union", "unsigned", "void", "volatile",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

const BINARY_PREC: &[(&str, u8)] = &[
    ("||", 1),
    ("&&", 2),
    ("|", 3),
    ("^", 4),
    ("&", 5),
    ("==", 6),
    ("!=", 6),
    ("<", 7),
    (">", 7),
    ("<=", 7),
    (">=", 7),
    ("<<", 8),
    (">>", 8),
    ("+", 9),
    ("-", 9),
    ("*", 10),
    ("/", 10),
    ("%", 10),
];

#[derive(Debug, Clone)]
enum Expr {
    Ident(String),
    Lit(LitKind, String),
    Unary(String, Box<Expr>),
    Postfix(String, Box<Expr>),
    Binary(String, Box<Expr>, Box<Expr>),
    Assign(String, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Member(Box<Expr>, String, String),
    Cast(String, Box<Expr>),
    SizeofType(String),
    Sizeof(Box<Expr>),
    Comma(Vec<Expr>),
    InitList(Vec<Expr>),
}

impl Expr {
    fn to_ast(&self) -> Ast {
        match self {
            Expr::Ident(n) => Ast::leaf(format!("ident:{n}")),
            Expr::Lit(k, t) => {
                let tag = match k {
                    LitKind::Int => "int",
                    LitKind::Str => "str",
                    LitKind::Char => "char",
                };
                Ast::leaf(format!("{tag}:{t}"))
            }
            Expr::Unary(op, e) => Ast::node(format!("unary:{op}"), vec![e.to_ast()]),
            Expr::Postfix(op, e) => Ast::node(format!("postfix:{op}"), vec![e.to_ast()]),
            Expr::Binary(op, l, r) => Ast::node(format!("binary:{op}"), vec![l.to_ast(), r.to_ast()]),
            Expr::Assign(op, l, r) => Ast::node(format!("assign:{op}"), vec![l.to_ast(), r.to_ast()]),
            Expr::Cond(c, a, b) => Ast::node("cond", vec![c.to_ast(), a.to_ast(), b.to_ast()]),
            Expr::Call(f, args) => {
                let mut ch = vec![f.to_ast()];
                ch.extend(args.iter().map(Expr::to_ast));
                Ast::node("call", ch)
            }
            Expr::Index(b, i) => Ast::node("index", vec![b.to_ast(), i.to_ast()]),
            Expr::Member(b, op, f) => Ast::node(format!("member:{op}:{f}"), vec![b.to_ast()]),
            Expr::Cast(ty, e) => Ast::node(format!("cast:{ty}"), vec![e.to_ast()]),
            Expr::SizeofType(ty) => Ast::leaf(format!("sizeof-type:{ty}")),
            Expr::Sizeof(e) => Ast::node("sizeof", vec![e.to_ast()]),
            Expr::Comma(es) => Ast::node("comma", es.iter().map(Expr::to_ast).collect()),
            Expr::InitList(es) => Ast::node("init-list", es.iter().map(Expr::to_ast).collect()),
        }
    }

    /// Base identifier and dotted access path of an lvalue-like expression:
    /// `s->a.b` gives `("s", "s.a.b")`.
    fn access_path(&self) -> Option<(String, String)> {
        match self {
            Expr::Ident(n) => Some((n.clone(), n.clone())),
            Expr::Member(b, _, f) => b.access_path().map(|(base, p)| (base, format!("{p}.{f}"))),
            Expr::Index(b, _) => b.access_path(),
            Expr::Unary(op, b) if op == "*" => b.access_path(),
            Expr::Cast(_, b) => b.access_path(),
            _ => None,
        }
    }
}

#[derive(Default)]
struct DefUse {
    defs: BTreeSet<String>,
    uses: BTreeSet<String>,
}

impl DefUse {
    fn read(&mut self, e: &Expr) {
        match e {
            Expr::Ident(n) => {
                self.uses.insert(n.clone());
            }
            Expr::Lit(..) | Expr::SizeofType(_) => {}
            Expr::Member(b, _, _) => {
                self.read(b);
                if let Some((_, path)) = e.access_path() {
                    self.uses.insert(path);
                }
            }
            Expr::Unary(op, x) | Expr::Postfix(op, x) if op == "++" || op == "--" => {
                self.write(x);
                self.read(x);
            }
            Expr::Unary(_, x) | Expr::Postfix(_, x) | Expr::Cast(_, x) | Expr::Sizeof(x) => {
                self.read(x)
            }
            Expr::Binary(_, l, r) | Expr::Index(l, r) => {
                self.read(l);
                self.read(r);
            }
            Expr::Assign(op, l, r) => {
                self.write(l);
                if op != "=" {
                    self.read(l);
                } else {
                    self.read_lvalue_operands(l);
                }
                self.read(r);
            }
            Expr::Cond(c, a, b) => {
                self.read(c);
                self.read(a);
                self.read(b);
            }
            Expr::Call(f, args) => {
                if !matches!(**f, Expr::Ident(_)) {
                    self.read(f);
                }
                for a in args {
                    if let Expr::Unary(op, inner) = a {
                        if op == "&" {
                            self.write(inner);
                        }
                    }
                    self.read(a);
                }
            }
            Expr::Comma(es) | Expr::InitList(es) => es.iter().for_each(|x| self.read(x)),
        }
    }

    /// Defines the base identifier of an lvalue, plus its access path when
    /// that differs from the base.
    fn write(&mut self, e: &Expr) {
        if let Some((base, path)) = e.access_path() {
            self.defs.insert(base);
            self.defs.insert(path);
        }
    }

    /// Reads performed while locating a plain-assignment target: array
    /// subscripts and non-trivial pointer expressions.
    fn read_lvalue_operands(&mut self, e: &Expr) {
        match e {
            Expr::Index(b, i) => {
                self.read_lvalue_operands(b);
                self.read(i);
            }
            Expr::Member(b, _, _) => self.read_lvalue_operands(b),
            Expr::Unary(op, b) if op == "*" => match **b {
                Expr::Ident(_) => {}
                _ => self.read(b),
            },
            Expr::Cast(_, b) => self.read_lvalue_operands(b),
            _ => {}
        }
    }
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    stmts: Vec<StmtNode>,
}

type PResult<T> = Result<T, FrontendError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + k)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(text))
    }

    fn bump(&mut self) -> PResult<&'t Token> {
        let t = self.peek().ok_or_else(|| self.error(&["<token>"]))?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<&'t Token> {
        if self.at(text) {
            self.bump()
        } else {
            Err(self.error(&[text]))
        }
    }

    fn error(&self, expected: &[&str]) -> FrontendError {
        let (line, col, found) = match self.peek() {
            Some(t) => (t.line, t.col, t.text.clone()),
            None => {
                let last = self.toks.last();
                (
                    last.map_or(1, |t| t.line),
                    last.map_or(1, |t| t.col + t.text.len()),
                    "end of input".into(),
                )
            }
        };
        FrontendError::SyntaxError {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn unsupported(&self, what: &str) -> FrontendError {
        let t = self.peek();
        FrontendError::UnsupportedConstruct {
            line: t.map_or(0, |t| t.line),
            col: t.map_or(0, |t| t.col),
            what: what.to_string(),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    // ---- types ---------------------------------------------------------------

    fn is_type_start_at(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Some(t) if t.kind == TokenKind::Keyword => TYPE_KEYWORDS.contains(&t.text.as_str()),
            Some(t) if t.kind == TokenKind::Ident => t.text.ends_with("_t"),
            _ => false,
        }
    }

    /// Whether the statement starting here is a declaration.
    fn starts_declaration(&self) -> bool {
        if self.is_type_start_at(0) {
            return true;
        }
        let Some(first) = self.peek() else { return false };
        if first.kind != TokenKind::Ident {
            return false;
        }
        // `T x ...` or `T *x;` with T a typedef name.
        let mut k = 1;
        while self.peek_at(k).is_some_and(|t| t.is("*")) {
            k += 1;
        }
        let name_follows = self.peek_at(k).is_some_and(|t| t.kind == TokenKind::Ident);
        let then = self.peek_at(k + 1);
        name_follows
            && (k == 1
                || then.is_some_and(|t| t.is(";") || t.is("=") || t.is(",") || t.is("[")))
    }

    /// Base type without pointer stars.
    fn base_type(&mut self) -> PResult<String> {
        let mut parts: Vec<String> = Vec::new();
        let mut has_base = false;
        loop {
            let Some(t) = self.peek() else { break };
            if t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str()) {
                self.pos += 1;
                parts.push(t.text.clone());
                if matches!(t.text.as_str(), "struct" | "union" | "enum") {
                    parts.push(self.ident()?);
                    if self.at("{") {
                        return Err(self.unsupported("inline struct definition"));
                    }
                    has_base = true;
                } else if !matches!(
                    t.text.as_str(),
                    "const" | "static" | "extern" | "volatile" | "register" | "inline" | "auto"
                ) {
                    has_base = true;
                }
            } else if t.kind == TokenKind::Ident && !has_base {
                let next_is_name = self.peek_at(1).is_some_and(|n| n.kind == TokenKind::Ident || n.is("*"));
                if !next_is_name && !t.text.ends_with("_t") {
                    break;
                }
                self.pos += 1;
                parts.push(t.text.clone());
                has_base = true;
            } else {
                break;
            }
        }
        if parts.is_empty() {
            return Err(self.error(&["type"]));
        }
        Ok(parts.join(" "))
    }

    fn pointer_suffix(&mut self, base: &str) -> String {
        let mut stars = 0;
        while self.eat("*") {
            stars += 1;
        }
        if stars == 0 {
            base.to_string()
        } else {
            format!("{base} {}", "*".repeat(stars))
        }
    }

    /// Type name inside a cast or `sizeof(...)`.
    fn type_name(&mut self) -> PResult<String> {
        let base = self.base_type()?;
        Ok(self.pointer_suffix(&base))
    }

    // ---- expressions -----------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        let first = self.assignment()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(",") {
            items.push(self.assignment()?);
        }
        Ok(Expr::Comma(items))
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.conditional()?;
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Op && ASSIGN_OPS.contains(&t.text.as_str()) {
                self.pos += 1;
                let rhs = self.assignment()?;
                return Ok(Expr::Assign(t.text.clone(), Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let c = self.binary(1)?;
        if self.eat("?") {
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.conditional()?;
            return Ok(Expr::Cond(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let Some(t) = self.peek() else { break };
            if t.kind != TokenKind::Op {
                break;
            }
            let Some(&(_, prec)) = BINARY_PREC.iter().find(|(op, _)| *op == t.text) else {
                break;
            };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(t.text.clone(), Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let Some(t) = self.peek() else {
            return Err(self.error(&["expression"]));
        };
        if t.kind == TokenKind::Op && ["!", "~", "-", "+", "*", "&", "++", "--"].contains(&t.text.as_str()) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Unary(t.text.clone(), Box::new(inner)));
        }
        if t.is("sizeof") {
            self.pos += 1;
            if self.at("(") && self.is_type_start_at(1) {
                self.pos += 1;
                let ty = self.type_name()?;
                self.expect(")")?;
                return Ok(Expr::SizeofType(ty));
            }
            let inner = self.unary()?;
            return Ok(Expr::Sizeof(Box::new(inner)));
        }
        if t.is("(") && self.is_type_start_at(1) {
            self.pos += 1;
            let ty = self.type_name()?;
            self.expect(")")?;
            let inner = self.unary()?;
            return Ok(Expr::Cast(ty, Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat("(") {
                let mut args = Vec::new();
                if !self.at(")") {
                    loop {
                        args.push(self.assignment()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                e = Expr::Call(Box::new(e), args);
            } else if self.eat("[") {
                let i = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(i));
            } else if self.at(".") || self.at("->") {
                let op = self.bump()?.text.clone();
                let field = self.ident()?;
                e = Expr::Member(Box::new(e), op, field);
            } else if self.at("++") || self.at("--") {
                let op = self.bump()?.text.clone();
                e = Expr::Postfix(op, Box::new(e));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().ok_or_else(|| self.error(&["expression"]))?;
        match t.kind {
            TokenKind::Ident => {
                self.pos += 1;
                Ok(Expr::Ident(t.text.clone()))
            }
            TokenKind::Literal(k) => {
                self.pos += 1;
                Ok(Expr::Lit(k, t.text.clone()))
            }
            _ if t.is("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ if t.is("{") => {
                self.pos += 1;
                let mut items = Vec::new();
                while !self.at("}") {
                    items.push(self.assignment()?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect("}")?;
                Ok(Expr::InitList(items))
            }
            _ => Err(self.error(&["identifier", "literal", "("])),
        }
    }

    // ---- statements ------------------------------------------------------------

    fn push_stmt(
        &mut self,
        kind: StmtKind,
        ast: Option<Ast>,
        du: DefUse,
        text: String,
        line: usize,
        label: Option<String>,
    ) -> usize {
        let index = self.stmts.len();
        self.stmts.push(StmtNode {
            index,
            kind,
            ast,
            defs: du.defs,
            uses: du.uses,
            text,
            line,
            label,
            jump_target: None,
        });
        index
    }

    fn text(&self, from: usize, to: usize) -> String {
        render_tokens(&self.toks[from..to])
    }

    /// `int a = 1, *b;` up to but excluding the terminator.
    fn declaration(&mut self) -> PResult<(Ast, DefUse)> {
        let base = self.base_type()?;
        let mut du = DefUse::default();
        let mut declarators = Vec::new();
        loop {
            let ty = self.pointer_suffix(&base);
            let name = self.ident()?;
            let mut ty = ty;
            while self.eat("[") {
                if !self.at("]") {
                    let size = self.expr()?;
                    du.read(&size);
                }
                self.expect("]")?;
                ty.push_str("[]");
            }
            let mut children = Vec::new();
            if self.eat("=") {
                let init = self.assignment()?;
                du.read(&init);
                children.push(init.to_ast());
            }
            du.defs.insert(name.clone());
            declarators.push(Ast::node(format!("declarator:{ty}:{name}"), children));
            if !self.eat(",") {
                break;
            }
        }
        Ok((Ast::node("decl", declarators), du))
    }

    fn expr_statement_kind(e: &Expr) -> StmtKind {
        match e {
            Expr::Assign(..) => StmtKind::Assign,
            Expr::Unary(op, _) | Expr::Postfix(op, _) if op == "++" || op == "--" => {
                StmtKind::Assign
            }
            Expr::Comma(items) if items.iter().all(|i| Self::expr_statement_kind(i) == StmtKind::Assign) => {
                StmtKind::Assign
            }
            _ => StmtKind::Call,
        }
    }

    /// A declaration or expression used as a `for` clause or statement,
    /// without its terminator.
    fn simple(&mut self) -> PResult<(StmtKind, Ast, DefUse)> {
        if self.starts_declaration() {
            let (ast, du) = self.declaration()?;
            Ok((StmtKind::Decl, ast, du))
        } else {
            let e = self.expr()?;
            let mut du = DefUse::default();
            du.read(&e);
            Ok((Self::expr_statement_kind(&e), e.to_ast(), du))
        }
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        self.expect("{")?;
        let mut body = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            if let Some(s) = self.statement()? {
                body.push(s);
            }
        }
        self.expect("}")?;
        Ok(body)
    }

    /// Body of `if`/`while`/`for`: a braced block is flattened into the arm.
    fn arm(&mut self) -> PResult<Vec<Stmt>> {
        if self.at("{") {
            self.block_body()
        } else {
            Ok(self.statement()?.into_iter().collect())
        }
    }

    fn condition(&mut self) -> PResult<(Ast, DefUse)> {
        self.expect("(")?;
        let c = self.expr()?;
        self.expect(")")?;
        let mut du = DefUse::default();
        du.read(&c);
        Ok((c.to_ast(), du))
    }

    fn statement(&mut self) -> PResult<Option<Stmt>> {
        let start = self.pos;
        let t = self.peek().ok_or_else(|| self.error(&["statement"]))?;
        let line = t.line;
        if t.is(";") {
            self.pos += 1;
            return Ok(None);
        }
        if t.is("{") {
            let enter = self.push_stmt(
                StmtKind::BlockEnter,
                Some(Ast::leaf("block")),
                DefUse::default(),
                "{".into(),
                line,
                None,
            );
            let body = self.block_body()?;
            return Ok(Some(Stmt::Block { enter, body }));
        }
        if t.kind == TokenKind::Keyword {
            match t.text.as_str() {
                "if" => {
                    self.pos += 1;
                    let (ast, du) = self.condition()?;
                    let text = self.text(start, self.pos);
                    let pred = self.push_stmt(StmtKind::IfPred, Some(ast), du, text, line, None);
                    let then = self.arm()?;
                    let els = if self.eat("else") { Some(self.arm()?) } else { None };
                    return Ok(Some(Stmt::If { pred, then, els }));
                }
                "while" => {
                    self.pos += 1;
                    let (ast, du) = self.condition()?;
                    let text = self.text(start, self.pos);
                    let pred = self.push_stmt(StmtKind::WhilePred, Some(ast), du, text, line, None);
                    let body = self.arm()?;
                    return Ok(Some(Stmt::While { pred, body }));
                }
                "for" => return self.for_statement().map(Some),
                "return" => {
                    self.pos += 1;
                    let mut du = DefUse::default();
                    let mut children = Vec::new();
                    if !self.at(";") {
                        let e = self.expr()?;
                        du.read(&e);
                        children.push(e.to_ast());
                    }
                    self.expect(";")?;
                    let text = self.text(start, self.pos);
                    let i = self.push_stmt(
                        StmtKind::Return,
                        Some(Ast::node("return", children)),
                        du,
                        text,
                        line,
                        None,
                    );
                    return Ok(Some(Stmt::Return(i)));
                }
                "goto" => {
                    self.pos += 1;
                    let label = self.ident()?;
                    self.expect(";")?;
                    let text = self.text(start, self.pos);
                    let i = self.push_stmt(
                        StmtKind::Goto,
                        Some(Ast::leaf(format!("goto:{label}"))),
                        DefUse::default(),
                        text,
                        line,
                        Some(label),
                    );
                    return Ok(Some(Stmt::Goto(i)));
                }
                "break" | "continue" => {
                    let is_break = t.text == "break";
                    self.pos += 1;
                    self.expect(";")?;
                    let text = self.text(start, self.pos);
                    let i = self.push_stmt(
                        StmtKind::Goto,
                        Some(Ast::leaf(t.text.clone())),
                        DefUse::default(),
                        text,
                        line,
                        None,
                    );
                    return Ok(Some(if is_break { Stmt::Break(i) } else { Stmt::Continue(i) }));
                }
                "else" => return Err(self.error(&["statement"])),
                "do" | "switch" | "case" | "default" | "typedef" => {
                    return Err(self.unsupported(&format!("`{}` statement", t.text)))
                }
                _ => {}
            }
        }
        if t.kind == TokenKind::Ident && self.peek_at(1).is_some_and(|n| n.is(":")) {
            self.pos += 2;
            let text = self.text(start, self.pos);
            let i = self.push_stmt(
                StmtKind::Label,
                None,
                DefUse::default(),
                text,
                line,
                Some(t.text.clone()),
            );
            return Ok(Some(Stmt::Label(i)));
        }
        let (kind, ast, du) = self.simple()?;
        self.expect(";")?;
        let text = self.text(start, self.pos);
        let i = self.push_stmt(kind, Some(ast), du, text, line, None);
        Ok(Some(Stmt::Simple(i)))
    }

    fn for_statement(&mut self) -> PResult<Stmt> {
        let start = self.pos;
        let line = self.bump()?.line;
        self.expect("(")?;
        // Clause nodes are numbered in source order: init, condition, step.
        let init = if self.at(";") {
            None
        } else {
            let from = self.pos;
            let (kind, ast, du) = self.simple()?;
            let text = format!("{};", self.text(from, self.pos));
            let l = self.toks[from].line;
            Some(self.push_stmt(kind, Some(ast), du, text, l, None))
        };
        self.expect(";")?;
        let (cond_ast, cond_du) = if self.at(";") {
            (Ast::leaf("int:1"), DefUse::default())
        } else {
            let c = self.expr()?;
            let mut du = DefUse::default();
            du.read(&c);
            (c.to_ast(), du)
        };
        self.expect(";")?;
        let pred = self.push_stmt(StmtKind::ForPred, Some(cond_ast), cond_du, String::new(), line, None);
        let step = if self.at(")") {
            None
        } else {
            let from = self.pos;
            let e = self.expr()?;
            let mut du = DefUse::default();
            du.read(&e);
            let text = format!("{};", self.text(from, self.pos));
            let l = self.toks[from].line;
            Some(self.push_stmt(Self::expr_statement_kind(&e), Some(e.to_ast()), du, text, l, None))
        };
        self.expect(")")?;
        self.stmts[pred].text = self.text(start, self.pos);
        let body = self.arm()?;
        Ok(Stmt::For {
            init,
            pred,
            step,
            body,
        })
    }

    fn param_list(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.at("void") && self.peek_at(1).is_some_and(|t| t.is(")")) {
            self.pos += 1;
        } else if !self.at(")") {
            loop {
                if self.at("...") {
                    return Err(self.unsupported("variadic parameters"));
                }
                let base = self.base_type()?;
                let mut ty = self.pointer_suffix(&base);
                if !self.peek().is_some_and(|t| t.kind == TokenKind::Ident) {
                    return Err(self.unsupported("unnamed parameter"));
                }
                let name = self.ident()?;
                while self.eat("[") {
                    self.expect("]")?;
                    ty.push_str("[]");
                }
                params.push(Param { name, ty });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(params)
    }

    fn function(&mut self) -> PResult<MethodAst> {
        let base = self.base_type()?;
        let return_type = self.pointer_suffix(&base);
        let name = self.ident()?;
        let params = self.param_list()?;
        if !self.at("{") {
            return Err(self.error(&["{"]));
        }
        self.stmts.clear();
        let structure = self.block_body()?;
        let mut body = std::mem::take(&mut self.stmts);
        if body.is_empty() {
            return Err(FrontendError::EmptyMethod(name));
        }
        resolve_labels(&mut body)?;
        Ok(MethodAst {
            name,
            return_type,
            params,
            body,
            structure,
        })
    }
}

fn resolve_labels(body: &mut [StmtNode]) -> PResult<()> {
    let mut labels = BTreeMap::new();
    for s in body.iter() {
        if s.kind == StmtKind::Label {
            if let Some(l) = &s.label {
                labels.insert(l.clone(), s.index);
            }
        }
    }
    for s in body.iter_mut() {
        if s.kind == StmtKind::Goto {
            if let Some(l) = &s.label {
                let target = labels
                    .get(l)
                    .ok_or_else(|| FrontendError::UnresolvedLabel(l.clone()))?;
                s.jump_target = Some(*target);
            }
        }
    }
    Ok(())
}

/// Parses exactly one function definition.
pub fn parse_method(tokens: &[Token]) -> Result<MethodAst, FrontendError> {
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        stmts: Vec::new(),
    };
    let m = p.function()?;
    if p.pos != tokens.len() {
        return Err(p.error(&["end of input"]));
    }
    Ok(m)
}

/// Parses a translation unit of one or more function definitions.
pub fn parse_program(tokens: &[Token]) -> Result<Vec<MethodAst>, FrontendError> {
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        stmts: Vec::new(),
    };
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.function()?);
    }
    if out.is_empty() {
        return Err(p.error(&["function definition"]));
    }
    Ok(out)
}
