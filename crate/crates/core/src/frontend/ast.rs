use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Labelled tree. Leaf labels carry their payload after a colon, e.g.
/// `ident:s_cmd`, `int:0`, `member:->:insize`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ast {
    pub label: String,
    pub children: Vec<Ast>,
}

impl Ast {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Ast>) -> Self {
        Self {
            label: label.into(),
            children,
        }
    }

    /// The node kind: everything before the first colon.
    pub fn kind(&self) -> &str {
        self.label.split(':').next().unwrap_or("")
    }

    /// The payload after the first colon, if any.
    pub fn payload(&self) -> Option<&str> {
        self.label.split_once(':').map(|(_, p)| p)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Ast::size).sum::<usize>()
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Ast)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// Symbol for the tree encoder's vocabulary: the node kind plus any
    /// operator, without identifier or literal payloads.
    pub fn vocab_label(&self) -> String {
        match self.kind() {
            "ident" | "int" | "str" | "char" | "declarator" | "goto" | "cast" | "sizeof-type" => {
                self.kind().to_string()
            }
            "member" => {
                let op = self.payload().and_then(|p| p.split(':').next()).unwrap_or("");
                format!("member:{op}")
            }
            _ => self.label.clone(),
        }
    }
}

impl Serialize for Ast {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.label, &self.children).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ast {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (label, children) = <(String, Vec<Ast>)>::deserialize(d)?;
        Ok(Ast { label, children })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StmtKind {
    Decl,
    Assign,
    Call,
    IfPred,
    WhilePred,
    ForPred,
    Return,
    Goto,
    Label,
    BlockEnter,
}

impl StmtKind {
    pub const ALL: [StmtKind; 10] = [
        StmtKind::Decl,
        StmtKind::Assign,
        StmtKind::Call,
        StmtKind::IfPred,
        StmtKind::WhilePred,
        StmtKind::ForPred,
        StmtKind::Return,
        StmtKind::Goto,
        StmtKind::Label,
        StmtKind::BlockEnter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StmtKind::Decl => "decl",
            StmtKind::Assign => "assign",
            StmtKind::Call => "call",
            StmtKind::IfPred => "if-pred",
            StmtKind::WhilePred => "while-pred",
            StmtKind::ForPred => "for-pred",
            StmtKind::Return => "return",
            StmtKind::Goto => "goto",
            StmtKind::Label => "label",
            StmtKind::BlockEnter => "block-enter",
        }
    }

    pub fn is_predicate(self) -> bool {
        matches!(
            self,
            StmtKind::IfPred | StmtKind::WhilePred | StmtKind::ForPred
        )
    }
}

impl fmt::Display for StmtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StmtKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StmtKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown statement kind `{s}`"))
    }
}

/// One statement of a method: a PDG node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StmtNode {
    pub index: usize,
    pub kind: StmtKind,
    /// Absent only for labels.
    pub ast: Option<Ast>,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub text: String,
    /// 1-based source line of the statement's first token.
    pub line: usize,
    /// Label name for `goto` and `label` statements.
    pub label: Option<String>,
    /// Resolved statement index of a `goto`'s label.
    pub jump_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

/// Structured control flow over statement indices, as written in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Simple(usize),
    Return(usize),
    Goto(usize),
    Break(usize),
    Continue(usize),
    Label(usize),
    Block {
        enter: usize,
        body: Vec<Stmt>,
    },
    If {
        pred: usize,
        then: Vec<Stmt>,
        els: Option<Vec<Stmt>>,
    },
    While {
        pred: usize,
        body: Vec<Stmt>,
    },
    For {
        init: Option<usize>,
        pred: usize,
        step: Option<usize>,
        body: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodAst {
    pub name: String,
    pub return_type: String,
    pub params: Vec<Param>,
    /// Statements in source order; `body[i].index == i`.
    pub body: Vec<StmtNode>,
    pub structure: Vec<Stmt>,
}

impl MethodAst {
    /// Static type of a variable from its declaration or parameter list.
    pub fn declared_type(&self, var: &str) -> Option<String> {
        if let Some(p) = self.params.iter().find(|p| p.name == var) {
            return Some(p.ty.clone());
        }
        self.body.iter().find_map(|s| declared_type_in(s, var))
    }
}

/// Looks up `var` among the declarators of a `decl` statement.
pub fn declared_type_in(stmt: &StmtNode, var: &str) -> Option<String> {
    if stmt.kind != StmtKind::Decl && stmt.kind != StmtKind::Assign {
        return None;
    }
    let ast = stmt.ast.as_ref()?;
    if ast.kind() != "decl" {
        return None;
    }
    ast.children.iter().find_map(|d| {
        let payload = d.payload()?;
        let (ty, name) = payload.rsplit_once(':')?;
        (name == var).then(|| ty.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_form_is_nested_pairs() {
        let a = Ast::node("call", vec![Ast::leaf("ident:f"), Ast::leaf("int:1")]);
        let j = serde_json::to_string(&a).unwrap();
        assert_eq!(j, r#"["call",[["ident:f",[]],["int:1",[]]]]"#);
        let back: Ast = serde_json::from_str(&j).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn vocab_labels_drop_payloads() {
        assert_eq!(Ast::leaf("ident:s_cmd").vocab_label(), "ident");
        assert_eq!(Ast::leaf("member:->:insize").vocab_label(), "member:->");
        assert_eq!(Ast::leaf("binary:+").vocab_label(), "binary:+");
    }

    #[test]
    fn kind_round_trips_through_str() {
        for k in StmtKind::ALL {
            assert_eq!(k.as_str().parse::<StmtKind>().unwrap(), k);
        }
    }
}
