//! Agent kinds compared by the evaluation harness.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::arena::AgentSetup;
use crate::btree::{BehaviorTree, TaskKind};
use crate::controller::{hybrid_bt, scripted_bt, Controller, Idle, PolicyController, PolicyTasks};
use crate::error::{Error, Result};
use crate::policy::{NetworkSpec, PolicyParams};
use crate::sensors::ObservationKind;
use crate::skills::OpponentSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    /// Behavior tree with scripted leaves.
    Bt,
    /// Behavior tree whose leaves run trained policies where available.
    Hybrid,
    /// One policy in direct control.
    Curriculum,
    /// Neither moves nor attacks.
    Static,
    /// Offense-only tree with unlimited ammunition.
    Aggressive,
}

#[derive(Clone)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub tree: Option<Arc<BehaviorTree>>,
    pub leaves: Vec<(TaskKind, Arc<PolicyParams>)>,
    pub policy: Option<Arc<PolicyParams>>,
    /// Policies act on their distribution mode instead of sampling.
    pub deterministic: bool,
    /// Round-trips through [`AgentSpec::parse`] when built from text.
    pub label: String,
}

impl fmt::Debug for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AgentSpec({})", self.label)
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl AgentSpec {
    fn base(kind: AgentKind, label: &str) -> Self {
        AgentSpec { kind, tree: None, leaves: Vec::new(), policy: None, deterministic: true, label: label.to_string() }
    }

    pub fn bt() -> Self {
        Self::bt_with(BehaviorTree::default_tree())
    }

    pub fn bt_with(tree: BehaviorTree) -> Self {
        AgentSpec { tree: Some(Arc::new(tree)), ..Self::base(AgentKind::Bt, "bt") }
    }

    /// Default tree with the given policy leaves; other leaves stay scripted.
    pub fn hybrid(leaves: Vec<(TaskKind, PolicyParams)>) -> Self {
        AgentSpec {
            tree: Some(Arc::new(BehaviorTree::default_tree())),
            leaves: leaves.into_iter().map(|(t, p)| (t, Arc::new(p))).collect(),
            ..Self::base(AgentKind::Hybrid, "hybrid")
        }
    }

    pub fn curriculum(params: PolicyParams) -> Self {
        AgentSpec { policy: Some(Arc::new(params)), ..Self::base(AgentKind::Curriculum, "curriculum") }
    }

    pub fn static_npc() -> Self {
        Self::base(AgentKind::Static, "static")
    }

    pub fn aggressive() -> Self {
        AgentSpec { tree: Some(Arc::new(BehaviorTree::aggressive_tree())), ..Self::base(AgentKind::Aggressive, "aggressive") }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn sampling(mut self) -> Self {
        self.deterministic = false;
        self
    }

    /// Parses `static`, `aggressive[:TREE]`, `bt[:TREE]`,
    /// `hybrid[:TASK=MODEL,...]`, `hybrid-init`, `curriculum:MODEL`,
    /// `curriculum-init` or a bare tree file path (scripted BT).
    /// TREE is a built-in tree name, inline DSL or a tree file; MODEL is a
    /// weight file.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (text, None),
        };
        let tree = |default: fn() -> BehaviorTree| -> Result<BehaviorTree> { arg.map_or_else(|| Ok(default()), OpponentSpec::resolve_tree) };
        let spec = match head {
            "static" => Self::static_npc(),
            "bt" => Self::bt_with(tree(BehaviorTree::default_tree)?),
            "aggressive" => AgentSpec { tree: Some(Arc::new(tree(BehaviorTree::aggressive_tree)?)), ..Self::aggressive() },
            "hybrid" => {
                let mut leaves = Vec::new();
                for part in arg.unwrap_or("").split(',').filter(|p| !p.is_empty()) {
                    let (task, path) = part.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("expected TASK=MODEL, got {part}")))?;
                    let task = TaskKind::from_name(task).ok_or_else(|| Error::InvalidConfig(format!("unknown task {task}")))?;
                    leaves.push((task, PolicyParams::load(Path::new(path), &NetworkSpec::for_task(task))?));
                }
                Self::hybrid(leaves)
            }
            "hybrid-init" => Self::hybrid_untrained(0),
            "curriculum" => {
                let path = arg.ok_or_else(|| Error::InvalidConfig("curriculum needs a model path".into()))?;
                Self::curriculum(PolicyParams::load(Path::new(path), &NetworkSpec::curriculum())?)
            }
            "curriculum-init" => Self::curriculum(PolicyParams::init(&NetworkSpec::curriculum(), 0)),
            _ if Path::new(text).is_file() => Self::bt_with(BehaviorTree::load(Path::new(text))?),
            other => return Err(Error::InvalidConfig(format!("unknown agent kind {other}"))),
        };
        Ok(spec.with_label(text))
    }

    /// Hybrid agent with freshly initialized policies on every leaf; costs
    /// the same to run as a trained one.
    pub fn hybrid_untrained(seed: u64) -> Self {
        Self::hybrid(TaskKind::ALL.iter().map(|&t| (t, PolicyParams::init(&NetworkSpec::for_task(t), seed))).collect()).with_label("hybrid-init")
    }

    /// Arena setup overrides for this agent on `team`.
    pub fn setup(&self, team: u8) -> AgentSetup {
        AgentSetup { unlimited_ammo: self.kind == AgentKind::Aggressive, ..AgentSetup::team(team) }
    }

    pub fn build(&self) -> Result<Box<dyn Controller>> {
        let tree = || self.tree.clone().ok_or_else(|| Error::InvalidConfig(format!("{} needs a tree", self.label)));
        Ok(match self.kind {
            AgentKind::Static => Box::new(Idle),
            AgentKind::Bt | AgentKind::Aggressive => Box::new(scripted_bt(tree()?)),
            AgentKind::Hybrid => {
                let mut leaves = PolicyTasks::new(self.deterministic);
                for (t, p) in &self.leaves {
                    leaves.install(*t, p);
                }
                Box::new(hybrid_bt(tree()?, leaves))
            }
            AgentKind::Curriculum => {
                let p = self.policy.as_ref().ok_or_else(|| Error::InvalidConfig("curriculum agent needs a policy".into()))?;
                Box::new(PolicyController::new(p, ObservationKind::Curriculum, self.deterministic))
            }
        })
    }
}
