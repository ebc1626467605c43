use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::eqs::{EqsCriteria, DEFAULT_SAMPLES};
use super::nav::NavGrid;
use super::tree::{BehaviorTree, ConditionKind, NodeKind, TaskKind};
use crate::arena::{ActionCommand, AgentId, WorldState};
use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Running,
}

impl Status {
    pub fn letter(self) -> char {
        match self {
            Status::Success => 'S',
            Status::Failure => 'F',
            Status::Running => 'R',
        }
    }

    pub fn from_bool(b: bool) -> Status {
        if b {
            Status::Success
        } else {
            Status::Failure
        }
    }
}

/// Supplies leaf statuses to the tree walker.
pub trait LeafDriver {
    fn leaf(&mut self, id: usize, kind: &NodeKind) -> Status;
}

/// Depth-first tick. A selector returns its first non-Failure child status, a
/// sequence its first non-Success child status, `not` swaps Success and
/// Failure. `trace` receives (node id, status) as each visited node finishes.
pub fn walk(tree: &BehaviorTree, driver: &mut impl LeafDriver, trace: &mut Vec<(usize, Status)>) -> Status {
    walk_node(tree, 0, driver, trace)
}

fn walk_node(tree: &BehaviorTree, id: usize, driver: &mut impl LeafDriver, trace: &mut Vec<(usize, Status)>) -> Status {
    let node = tree.node(id);
    let status = match &node.kind {
        NodeKind::Selector => node
            .children
            .iter()
            .map(|&c| walk_node(tree, c, driver, trace))
            .find(|&s| s != Status::Failure)
            .unwrap_or(Status::Failure),
        NodeKind::Sequence => node
            .children
            .iter()
            .map(|&c| walk_node(tree, c, driver, trace))
            .find(|&s| s != Status::Success)
            .unwrap_or(Status::Success),
        NodeKind::Not => match walk_node(tree, node.children[0], driver, trace) {
            Status::Success => Status::Failure,
            Status::Failure => Status::Success,
            Status::Running => Status::Running,
        },
        kind => driver.leaf(id, kind),
    };
    trace.push((id, status));
    status
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtSettings {
    /// Healthy needs current and recent minimum health at or above this.
    pub healthy_threshold: f64,
    pub eqs_refresh_steps: u64,
    pub eqs_samples: usize,
    pub flee: EqsCriteria,
    pub hide: EqsCriteria,
    /// Combat fires when facing is within this angle of the target direction.
    pub aim_tolerance_deg: f64,
    pub replan_steps: u64,
    /// Replan when the goal has moved farther than this.
    pub replan_distance: f64,
    pub waypoint_radius: f64,
}

impl Default for BtSettings {
    fn default() -> Self {
        BtSettings {
            healthy_threshold: 50.0,
            eqs_refresh_steps: 15,
            eqs_samples: DEFAULT_SAMPLES,
            flee: EqsCriteria::flee(),
            hide: EqsCriteria::hide(),
            aim_tolerance_deg: 5.0,
            replan_steps: 15,
            replan_distance: 100.0,
            waypoint_radius: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqsCache {
    pub task: TaskKind,
    pub point: Vec2,
    pub step: u64,
}

/// Per-agent memory shared across ticks.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Blackboard {
    pub target: Option<AgentId>,
    /// Last position the target was seen at, with the step it was seen.
    pub last_seen: Option<(Vec2, u64)>,
    pub eqs: Option<EqsCache>,
    pub path: Vec<Vec2>,
    pub path_index: usize,
    pub path_goal: Option<Vec2>,
    pub path_step: u64,
    /// Task node that ran on the previous tick.
    pub active_task: Option<usize>,
    /// Rebuilt from the world on demand.
    #[serde(skip)]
    nav: Option<Arc<NavGrid>>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Navigation grid for the world's obstacles, built once per episode.
    pub fn nav(&mut self, world: &WorldState) -> Arc<NavGrid> {
        self.nav.get_or_insert_with(|| Arc::new(NavGrid::new(world))).clone()
    }

    pub fn clear_path(&mut self) {
        self.path.clear();
        self.path_index = 0;
        self.path_goal = None;
    }

    fn observe(&mut self, world: &WorldState, id: AgentId) {
        let me = world.agent(id);
        self.target = me.target;
        if let Some(t) = world.target_of(id) {
            if world.line_of_sight(me.position, t.position) {
                self.last_seen = Some((t.position, world.step));
            }
        }
    }
}

pub fn eval_condition(kind: &ConditionKind, world: &WorldState, id: AgentId, settings: &BtSettings) -> bool {
    let me = world.agent(id);
    let opponent = world.target_of(id);
    match *kind {
        ConditionKind::DistLt(t) => opponent.is_some_and(|o| me.position.distance(o.position) < t),
        ConditionKind::DistGt(t) => opponent.is_some_and(|o| me.position.distance(o.position) > t),
        ConditionKind::InSight => opponent.is_some_and(|o| world.line_of_sight(me.position, o.position)),
        ConditionKind::Healthy => {
            me.health >= settings.healthy_threshold && me.health_history_min() >= settings.healthy_threshold
        }
        ConditionKind::AmmoEmpty => me.ammo == 0,
    }
}

/// Everything a task leaf may read or update.
pub struct TaskContext<'a> {
    pub world: &'a WorldState,
    pub id: AgentId,
    pub node: usize,
    pub blackboard: &'a mut Blackboard,
    pub settings: &'a BtSettings,
    /// The leaf did not run on the previous tick.
    pub newly_active: bool,
}

/// Executes task leaves (scripted routines or policies).
pub trait TaskExecutor {
    fn run(&mut self, task: TaskKind, ctx: &mut TaskContext<'_>) -> Result<ActionCommand>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTrace {
    pub step: u64,
    pub agent: AgentId,
    pub entries: Vec<(usize, Status)>,
    pub active: Option<(usize, TaskKind)>,
    /// No task leaf was reached; the action was a no-op.
    pub no_task: bool,
}

impl TickTrace {
    pub fn status_of(&self, node: usize) -> Option<Status> {
        self.entries.iter().find(|e| e.0 == node).map(|e| e.1)
    }

    /// One line, e.g. `s=12 a=#0 1:sequence=F 3:healthy=S ... active=12:combat`.
    pub fn to_line(&self, tree: &BehaviorTree) -> String {
        let mut s = format!("s={} a={}", self.step, self.agent);
        for &(id, st) in &self.entries {
            let _ = write!(s, " {}:{}={}", id, tree.label(id).replace(' ', "_"), st.letter());
        }
        match self.active {
            Some((id, t)) => {
                let _ = write!(s, " active={}:{}", id, t);
            }
            None => s.push_str(" active=none"),
        }
        s
    }
}

struct WorldDriver<'a, 'w, E: TaskExecutor> {
    world: &'w WorldState,
    id: AgentId,
    blackboard: &'a mut Blackboard,
    settings: &'a BtSettings,
    exec: &'a mut E,
    action: Option<ActionCommand>,
    active: Option<(usize, TaskKind)>,
    error: Option<Error>,
}

impl<E: TaskExecutor> LeafDriver for WorldDriver<'_, '_, E> {
    fn leaf(&mut self, id: usize, kind: &NodeKind) -> Status {
        match kind {
            NodeKind::Condition(c) => Status::from_bool(eval_condition(c, self.world, self.id, self.settings)),
            NodeKind::Task(t) => {
                let newly_active = self.blackboard.active_task != Some(id);
                let mut ctx = TaskContext {
                    world: self.world,
                    id: self.id,
                    node: id,
                    blackboard: self.blackboard,
                    settings: self.settings,
                    newly_active,
                };
                match self.exec.run(*t, &mut ctx) {
                    Ok(a) => self.action = Some(a),
                    Err(e) => self.error = Some(e),
                }
                self.active = Some((id, *t));
                Status::Running
            }
            _ => unreachable!("composites are walked, not driven"),
        }
    }
}

/// Ticks `tree` for agent `id`: exactly one task leaf produces the action, or
/// none is reached and the action is a no-op flagged in the trace.
pub fn tick<E: TaskExecutor>(
    tree: &BehaviorTree,
    blackboard: &mut Blackboard,
    settings: &BtSettings,
    world: &WorldState,
    id: AgentId,
    exec: &mut E,
) -> Result<(ActionCommand, TickTrace)> {
    let me = world.try_agent(id).ok_or(Error::UnknownAgent(id))?;
    if !me.is_alive() {
        return Err(Error::AgentDead(id));
    }
    blackboard.observe(world, id);
    let mut entries = Vec::with_capacity(tree.len());
    let mut driver =
        WorldDriver { world, id, blackboard, settings, exec, action: None, active: None, error: None };
    walk(tree, &mut driver, &mut entries);
    if let Some(e) = driver.error {
        return Err(e);
    }
    let (action, active) = (driver.action, driver.active);
    blackboard.active_task = active.map(|a| a.0);
    let trace = TickTrace { step: world.step, agent: id, entries, active, no_task: active.is_none() };
    Ok((action.unwrap_or(ActionCommand::IDLE), trace))
}
