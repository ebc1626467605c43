use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skill ids, shared by scripted and policy task leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Combat,
    /// Also called Advance.
    #[serde(alias = "advance")]
    Search,
    Flee,
    Hide,
    /// Also called Move.
    #[serde(alias = "move")]
    Collect,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [TaskKind::Combat, TaskKind::Search, TaskKind::Flee, TaskKind::Hide, TaskKind::Collect];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Combat => "combat",
            TaskKind::Search => "search",
            TaskKind::Flee => "flee",
            TaskKind::Hide => "hide",
            TaskKind::Collect => "collect",
        }
    }

    pub fn from_name(s: &str) -> Option<TaskKind> {
        Some(match s {
            "combat" => TaskKind::Combat,
            "search" | "advance" => TaskKind::Search,
            "flee" => TaskKind::Flee,
            "hide" => TaskKind::Hide,
            "collect" | "move" => TaskKind::Collect,
            _ => return None,
        })
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConditionKind {
    DistLt(f64),
    DistGt(f64),
    InSight,
    Healthy,
    AmmoEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Selector,
    Sequence,
    Not,
    Condition(ConditionKind),
    Task(TaskKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<usize>,
}

/// A behavior tree stored as a flat arena; node ids are preorder indices and
/// the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTree {
    nodes: Vec<Node>,
}

impl BehaviorTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Builds a tree from a nested description, validating arities.
    pub fn from_spec(spec: &NodeSpec) -> Result<BehaviorTree> {
        let mut nodes = Vec::new();
        push_spec(spec, &mut nodes)?;
        Ok(BehaviorTree { nodes })
    }

    pub fn to_spec(&self) -> NodeSpec {
        self.spec_at(0)
    }

    fn spec_at(&self, id: usize) -> NodeSpec {
        let n = &self.nodes[id];
        NodeSpec { kind: n.kind.clone(), children: n.children.iter().map(|&c| self.spec_at(c)).collect() }
    }

    pub fn task_nodes(&self) -> impl Iterator<Item = (usize, TaskKind)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.kind {
            NodeKind::Task(t) => Some((i, t)),
            _ => None,
        })
    }

    /// Short label for traces, e.g. `selector` or `dist-lt 1000`.
    pub fn label(&self, id: usize) -> String {
        match &self.nodes[id].kind {
            NodeKind::Selector => "selector".into(),
            NodeKind::Sequence => "sequence".into(),
            NodeKind::Not => "not".into(),
            NodeKind::Condition(c) => condition_text(c),
            NodeKind::Task(t) => format!("task {}", t),
        }
    }

    /// Canonical single-line DSL rendering.
    pub fn to_dsl(&self) -> String {
        let mut s = String::new();
        self.write_dsl(0, &mut s);
        s
    }

    fn write_dsl(&self, id: usize, out: &mut String) {
        out.push('(');
        out.push_str(&self.label(id));
        for &c in &self.nodes[id].children {
            out.push(' ');
            self.write_dsl(c, out);
        }
        out.push(')');
    }

    /// Copy of the tree with every subtree rooted at a task of `kinds` removed.
    /// Composites left without children are removed as well.
    pub fn without_tasks(&self, kinds: &[TaskKind]) -> Result<BehaviorTree> {
        fn prune(spec: &NodeSpec, kinds: &[TaskKind]) -> Option<NodeSpec> {
            match spec.kind {
                NodeKind::Task(t) if kinds.contains(&t) => None,
                NodeKind::Selector | NodeKind::Sequence => {
                    let children: Vec<_> = spec.children.iter().filter_map(|c| prune(c, kinds)).collect();
                    // A sequence that lost a child no longer means the same thing.
                    if children.is_empty() || (spec.kind == NodeKind::Sequence && children.len() != spec.children.len()) {
                        None
                    } else {
                        Some(NodeSpec { kind: spec.kind.clone(), children })
                    }
                }
                NodeKind::Not => prune(&spec.children[0], kinds).map(|c| NodeSpec { kind: NodeKind::Not, children: vec![c] }),
                _ => Some(spec.clone()),
            }
        }
        let spec = prune(&self.to_spec(), kinds)
            .ok_or_else(|| Error::InvalidConfig("pruning removed every node of the tree".into()))?;
        BehaviorTree::from_spec(&spec)
    }
}

fn condition_text(c: &ConditionKind) -> String {
    match c {
        ConditionKind::DistLt(t) => format!("dist-lt {}", t),
        ConditionKind::DistGt(t) => format!("dist-gt {}", t),
        ConditionKind::InSight => "in-sight".into(),
        ConditionKind::Healthy => "healthy".into(),
        ConditionKind::AmmoEmpty => "ammo-empty".into(),
    }
}

/// Nested (pointer-based) tree description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub kind: NodeKind,
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn leaf(kind: NodeKind) -> Self {
        NodeSpec { kind, children: vec![] }
    }
}

fn push_spec(spec: &NodeSpec, nodes: &mut Vec<Node>) -> Result<usize> {
    let n = spec.children.len();
    let ok = match spec.kind {
        NodeKind::Selector | NodeKind::Sequence => n >= 1,
        NodeKind::Not => n == 1,
        NodeKind::Condition(_) | NodeKind::Task(_) => n == 0,
    };
    if !ok {
        return Err(Error::InvalidConfig(format!("bad arity {} for {:?}", n, spec.kind)));
    }
    let id = nodes.len();
    nodes.push(Node { kind: spec.kind.clone(), children: Vec::with_capacity(n) });
    for c in &spec.children {
        let cid = push_spec(c, nodes)?;
        nodes[id].children.push(cid);
    }
    Ok(id)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Lexer<'_> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn next_token(&mut self) -> Option<(Tok, usize, usize)> {
        loop {
            match *self.chars.peek()? {
                ';' => {
                    while self.chars.peek().is_some_and(|&c| c != '\n') {
                        self.bump();
                    }
                }
                c if c.is_whitespace() => {
                    self.bump();
                }
                _ => break,
            }
        }
        let (line, column) = (self.line, self.column);
        let c = self.bump()?;
        let tok = match c {
            '(' => Tok::Open,
            ')' => Tok::Close,
            _ => {
                let mut s = String::from(c);
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Tok::Atom(s)
            }
        };
        Some((tok, line, column))
    }
}

/// Parses the BT s-expression language.
///
/// ```text
/// node := (selector node+) | (sequence node+) | (not node)
///       | (dist-lt NUM) | (dist-gt NUM) | (in-sight) | (healthy) | (ammo-empty)
///       | (task NAME)
/// NAME := combat | search | advance | flee | hide | collect | move
/// ```
/// `;` starts a comment running to the end of the line.
pub fn parse_tree(text: &str) -> Result<BehaviorTree> {
    let mut lx = Lexer { chars: text.chars().peekable(), line: 1, column: 1 };
    let mut toks = Vec::new();
    while let Some(t) = lx.next_token() {
        toks.push(t);
    }
    let end = (lx.line, lx.column);
    let mut pos = 0;
    let spec = parse_node(&toks, &mut pos, end)?;
    if let Some((_, l, c)) = toks.get(pos) {
        return Err(perr(*l, *c, "unexpected input after the root node"));
    }
    BehaviorTree::from_spec(&spec)
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn parse_node(toks: &[(Tok, usize, usize)], pos: &mut usize, end: (usize, usize)) -> Result<NodeSpec> {
    let Some((tok, line, col)) = toks.get(*pos).cloned() else {
        return Err(perr(end.0, end.1, "unexpected end of input, expected '('"));
    };
    if tok != Tok::Open {
        return Err(perr(line, col, "expected '('"));
    }
    *pos += 1;
    let head = match toks.get(*pos) {
        Some((Tok::Atom(a), _, _)) => a.clone(),
        Some((_, l, c)) => return Err(perr(*l, *c, "expected a node kind")),
        None => return Err(perr(end.0, end.1, "unexpected end of input, expected a node kind")),
    };
    *pos += 1;
    let mut children = Vec::new();
    let mut atoms = Vec::new();
    loop {
        match toks.get(*pos) {
            None => return Err(perr(end.0, end.1, format!("unclosed '(' opened at {}:{}", line, col))),
            Some((Tok::Close, _, _)) => {
                *pos += 1;
                break;
            }
            Some((Tok::Open, _, _)) => children.push(parse_node(toks, pos, end)?),
            Some((Tok::Atom(a), l, c)) => {
                atoms.push((a.clone(), *l, *c));
                *pos += 1;
            }
        }
    }
    let arity = |want: &str| perr(line, col, format!("arity error: '{}' {}", head, want));
    let no_args = |atoms: &[(String, usize, usize)], children: &[NodeSpec]| -> Result<()> {
        if !atoms.is_empty() || !children.is_empty() {
            return Err(arity("takes no arguments"));
        }
        Ok(())
    };
    let number = |atoms: &[(String, usize, usize)], children: &[NodeSpec]| -> Result<f64> {
        if atoms.len() != 1 || !children.is_empty() {
            return Err(arity("takes exactly one number"));
        }
        let (a, l, c) = &atoms[0];
        match a.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(perr(*l, *c, format!("malformed number '{}'", a))),
        }
    };
    let kind = match head.as_str() {
        "selector" | "sequence" => {
            if let Some((a, l, c)) = atoms.first() {
                return Err(perr(*l, *c, format!("unexpected atom '{}' in {}", a, head)));
            }
            if children.is_empty() {
                return Err(arity("needs at least one child"));
            }
            let kind = if head == "selector" { NodeKind::Selector } else { NodeKind::Sequence };
            return Ok(NodeSpec { kind, children });
        }
        "not" => {
            if !atoms.is_empty() || children.len() != 1 {
                return Err(arity("takes exactly one child"));
            }
            return Ok(NodeSpec { kind: NodeKind::Not, children });
        }
        "dist-lt" => NodeKind::Condition(ConditionKind::DistLt(number(&atoms, &children)?)),
        "dist-gt" => NodeKind::Condition(ConditionKind::DistGt(number(&atoms, &children)?)),
        "in-sight" => {
            no_args(&atoms, &children)?;
            NodeKind::Condition(ConditionKind::InSight)
        }
        "healthy" => {
            no_args(&atoms, &children)?;
            NodeKind::Condition(ConditionKind::Healthy)
        }
        "ammo-empty" => {
            no_args(&atoms, &children)?;
            NodeKind::Condition(ConditionKind::AmmoEmpty)
        }
        "task" => {
            if atoms.len() != 1 || !children.is_empty() {
                return Err(arity("takes exactly one task name"));
            }
            let (a, l, c) = &atoms[0];
            let t = TaskKind::from_name(a).ok_or_else(|| perr(*l, *c, format!("unknown task '{}'", a)))?;
            NodeKind::Task(t)
        }
        other => return Err(perr(line, col + 1, format!("unknown node kind '{}'", other))),
    };
    Ok(NodeSpec::leaf(kind))
}

pub const DEFAULT_TREE: &str = include_str!("../../../../configs/trees/default.bt");
pub const AGGRESSIVE_TREE: &str = include_str!("../../../../configs/trees/aggressive.bt");

impl BehaviorTree {
    pub fn default_tree() -> BehaviorTree {
        parse_tree(DEFAULT_TREE).expect("bundled default tree parses")
    }

    pub fn aggressive_tree() -> BehaviorTree {
        parse_tree(AGGRESSIVE_TREE).expect("bundled aggressive tree parses")
    }

    pub fn load(path: &std::path::Path) -> Result<BehaviorTree> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_tree(&text)
    }
}
