use std::collections::VecDeque;
use std::fmt;

use super::ast::{MethodAst, Stmt, StmtKind};
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Seq,
    True,
    False,
    Jump,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Seq => "seq",
            Branch::True => "true",
            Branch::False => "false",
            Branch::Jump => "jump",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CfgEdge {
    pub from: usize,
    pub to: usize,
    pub branch: Branch,
}

/// Statement-level CFG. Nodes `0..n` are statements, `n` is ENTRY and
/// `n + 1` is EXIT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    n: usize,
    edges: Vec<CfgEdge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl Cfg {
    /// Builds a CFG from raw edges over `n` statements, then adds the
    /// synthetic edges that make every node reachable from ENTRY and able to
    /// reach EXIT.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = CfgEdge>) -> Self {
        let mut cfg = Cfg {
            n,
            edges: Vec::new(),
            succ: vec![Vec::new(); n + 2],
            pred: vec![Vec::new(); n + 2],
        };
        for e in edges {
            cfg.push(e);
        }
        cfg.repair();
        cfg
    }

    fn push(&mut self, e: CfgEdge) {
        assert!(e.from < self.n + 2 && e.to < self.n + 2, "edge {e:?} out of range");
        if self.edges.contains(&e) {
            return;
        }
        self.edges.push(e);
        if !self.succ[e.from].contains(&e.to) {
            self.succ[e.from].push(e.to);
            self.pred[e.to].push(e.from);
        }
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n + 2];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            let next = if forward { &self.succ[v] } else { &self.pred[v] };
            for &w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    fn repair(&mut self) {
        // One synthetic edge at a time, lowest index first: a single edge
        // often fixes a whole unreachable region.
        loop {
            let seen = self.reach(self.entry(), true);
            match (0..self.n).find(|&v| !seen[v]) {
                Some(v) => self.push(CfgEdge {
                    from: self.entry(),
                    to: v,
                    branch: Branch::Seq,
                }),
                None => break,
            }
        }
        loop {
            let seen = self.reach(self.exit(), false);
            match (0..self.n).find(|&v| !seen[v]) {
                Some(v) => self.push(CfgEdge {
                    from: v,
                    to: self.exit(),
                    branch: Branch::Seq,
                }),
                None => break,
            }
        }
        if !self.succ[self.entry()].contains(&self.exit()) && self.n == 0 {
            self.push(CfgEdge {
                from: self.entry(),
                to: self.exit(),
                branch: Branch::Seq,
            });
        }
    }

    pub fn statement_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n + 2
    }

    pub fn entry(&self) -> usize {
        self.n
    }

    pub fn exit(&self) -> usize {
        self.n + 1
    }

    pub fn edges(&self) -> &[CfgEdge] {
        &self.edges
    }

    /// Distinct successors in insertion order.
    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.pred[v]
    }
}

struct Lowering<'m> {
    m: &'m MethodAst,
    edges: Vec<CfgEdge>,
    exit: usize,
    // (continue target, pending break edges) per enclosing loop
    loops: Vec<(usize, Vec<(usize, Branch)>)>,
}

type Pending = Vec<(usize, Branch)>;

impl Lowering<'_> {
    fn connect(&mut self, incoming: Pending, to: usize) {
        for (from, branch) in incoming {
            self.edges.push(CfgEdge { from, to, branch });
        }
    }

    fn jump(&mut self, from: usize, to: usize) {
        self.edges.push(CfgEdge {
            from,
            to,
            branch: Branch::Jump,
        });
    }

    fn outside_loop(&self, i: usize) -> FrontendError {
        let s = &self.m.body[i];
        FrontendError::UnsupportedConstruct {
            line: s.line,
            col: 0,
            what: format!("`{}` outside a loop", s.text.trim_end_matches(';')),
        }
    }

    fn list(&mut self, stmts: &[Stmt], mut incoming: Pending) -> Result<Pending, FrontendError> {
        for s in stmts {
            incoming = self.stmt(s, incoming)?;
        }
        Ok(incoming)
    }

    fn stmt(&mut self, s: &Stmt, incoming: Pending) -> Result<Pending, FrontendError> {
        Ok(match s {
            Stmt::Simple(i) | Stmt::Label(i) => {
                self.connect(incoming, *i);
                vec![(*i, Branch::Seq)]
            }
            Stmt::Return(i) => {
                self.connect(incoming, *i);
                self.jump(*i, self.exit);
                Vec::new()
            }
            Stmt::Goto(i) => {
                self.connect(incoming, *i);
                let node = &self.m.body[*i];
                let target = node.jump_target.ok_or_else(|| {
                    FrontendError::UnresolvedLabel(node.label.clone().unwrap_or_default())
                })?;
                self.jump(*i, target);
                Vec::new()
            }
            Stmt::Break(i) => {
                self.connect(incoming, *i);
                if self.loops.is_empty() {
                    return Err(self.outside_loop(*i));
                }
                let (_, breaks) = self.loops.last_mut().expect("checked above");
                breaks.push((*i, Branch::Jump));
                Vec::new()
            }
            Stmt::Continue(i) => {
                self.connect(incoming, *i);
                let &(target, _) = self.loops.last().ok_or_else(|| self.outside_loop(*i))?;
                self.jump(*i, target);
                Vec::new()
            }
            Stmt::Block { enter, body } => {
                self.connect(incoming, *enter);
                self.list(body, vec![(*enter, Branch::Seq)])?
            }
            Stmt::If { pred, then, els } => {
                self.connect(incoming, *pred);
                let mut out = self.list(then, vec![(*pred, Branch::True)])?;
                match els {
                    Some(els) => out.extend(self.list(els, vec![(*pred, Branch::False)])?),
                    None => out.push((*pred, Branch::False)),
                }
                out
            }
            Stmt::While { pred, body } => {
                self.connect(incoming, *pred);
                self.loop_body(*pred, *pred, None, body)?
            }
            Stmt::For {
                init,
                pred,
                step,
                body,
            } => {
                let incoming = match init {
                    Some(i) => {
                        self.connect(incoming, *i);
                        vec![(*i, Branch::Seq)]
                    }
                    None => incoming,
                };
                self.connect(incoming, *pred);
                self.loop_body(*pred, step.unwrap_or(*pred), *step, body)?
            }
        })
    }

    fn loop_body(
        &mut self,
        pred: usize,
        continue_to: usize,
        step: Option<usize>,
        body: &[Stmt],
    ) -> Result<Pending, FrontendError> {
        self.loops.push((continue_to, Vec::new()));
        let out = self.list(body, vec![(pred, Branch::True)])?;
        match step {
            Some(st) => {
                self.connect(out, st);
                self.connect(vec![(st, Branch::Seq)], pred);
            }
            None => self.connect(out, pred),
        }
        let (_, breaks) = self.loops.pop().expect("pushed above");
        let mut exits = vec![(pred, Branch::False)];
        exits.extend(breaks);
        Ok(exits)
    }
}

/// Lowers the structured statement tree of `m` to a CFG.
pub fn build_cfg(m: &MethodAst) -> Result<Cfg, FrontendError> {
    let n = m.body.len();
    for s in &m.body {
        if s.kind == StmtKind::Goto && s.jump_target.is_none() && s.label.is_some() {
            return Err(FrontendError::UnresolvedLabel(s.label.clone().unwrap_or_default()));
        }
    }
    let mut low = Lowering {
        m,
        edges: Vec::new(),
        exit: n + 1,
        loops: Vec::new(),
    };
    let out = low.list(&m.structure, vec![(n, Branch::Seq)])?;
    low.connect(out, n + 1);
    Ok(Cfg::from_edges(n, low.edges))
}
