//! Per-agent controllers: scripted opponents, behavior trees (scripted or
//! policy leaves) and whole-game policies.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arena::{ActionCommand, AgentId, WorldState};
use crate::btree::{scripted_task, tick, BehaviorTree, Blackboard, BtSettings, TaskContext, TaskExecutor, TaskKind, TickTrace};
use crate::error::Result;
use crate::policy::{observation_kind, PolicyParams, PolicyRunner, SampledAction};
use crate::sensors::{encode, ObservationKind, SensorConfig};

pub trait Controller: Send {
    /// Prepares for a new episode; `seed` drives any sampling.
    fn reset(&mut self, seed: u64);
    fn act(&mut self, world: &WorldState, id: AgentId) -> Result<ActionCommand>;
    /// Trace of the most recent tree tick, for tree-driven controllers.
    fn last_trace(&self) -> Option<&TickTrace> {
        None
    }
    /// Per-episode memory for checkpoints; stateless controllers keep none.
    fn snapshot(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn restore(&mut self, _state: serde_json::Value) -> Result<()> {
        Ok(())
    }
}

/// Does not move or shoot.
#[derive(Debug, Clone, Copy, Default)]
pub struct Idle;

impl Controller for Idle {
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, _world: &WorldState, _id: AgentId) -> Result<ActionCommand> {
        Ok(ActionCommand::IDLE)
    }
}

/// Runs straight at its target at full speed, never shooting.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pursuer;

impl Controller for Pursuer {
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, world: &WorldState, id: AgentId) -> Result<ActionCommand> {
        Ok(if world.target_of(id).is_some() { ActionCommand::new(0.0, 1.0, false) } else { ActionCommand::IDLE })
    }
}

/// Stands still and fires whenever aimed at a visible target.
#[derive(Debug, Clone, Copy)]
pub struct Turret {
    pub aim_tolerance_deg: f64,
}

impl Default for Turret {
    fn default() -> Self {
        Turret { aim_tolerance_deg: BtSettings::default().aim_tolerance_deg }
    }
}

impl Controller for Turret {
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, world: &WorldState, id: AgentId) -> Result<ActionCommand> {
        let me = world.agent(id);
        let Some(t) = world.target_of(id) else { return Ok(ActionCommand::IDLE) };
        let Some(dir) = (t.position - me.position).try_normalize() else { return Ok(ActionCommand::IDLE) };
        let aimed = me.facing.dot(dir) >= libm::cos(self.aim_tolerance_deg.to_radians()) - 1e-12
            && world.line_of_sight(me.position, t.position);
        Ok(ActionCommand { shoot: aimed, ..ActionCommand::IDLE })
    }
}

/// Behavior-tree agent with a pluggable leaf executor.
pub struct BtController<E> {
    pub tree: Arc<BehaviorTree>,
    pub settings: BtSettings,
    pub executor: E,
    blackboard: Blackboard,
    trace: Option<TickTrace>,
}

impl<E: TaskExecutor + LeafReset> BtController<E> {
    pub fn new(tree: Arc<BehaviorTree>, settings: BtSettings, executor: E) -> Self {
        BtController { tree, settings, executor, blackboard: Blackboard::new(), trace: None }
    }
}

/// Executor state that must be cleared between episodes.
pub trait LeafReset {
    fn reset(&mut self, seed: u64);
}

impl LeafReset for crate::btree::ScriptedTasks {
    fn reset(&mut self, _seed: u64) {}
}

impl<E: TaskExecutor + LeafReset + Send> Controller for BtController<E> {
    fn reset(&mut self, seed: u64) {
        self.blackboard = Blackboard::new();
        self.trace = None;
        self.executor.reset(seed);
    }

    fn act(&mut self, world: &WorldState, id: AgentId) -> Result<ActionCommand> {
        let (cmd, trace) = tick(&self.tree, &mut self.blackboard, &self.settings, world, id, &mut self.executor)?;
        self.trace = Some(trace);
        Ok(cmd)
    }

    fn last_trace(&self) -> Option<&TickTrace> {
        self.trace.as_ref()
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(&self.blackboard).expect("blackboard serializes")
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        self.blackboard = serde_json::from_value(state)?;
        self.trace = None;
        Ok(())
    }
}

pub fn scripted_bt(tree: Arc<BehaviorTree>) -> BtController<crate::btree::ScriptedTasks> {
    BtController::new(tree, BtSettings::default(), crate::btree::ScriptedTasks)
}

struct PolicyLeaf {
    runner: PolicyRunner,
    kind: ObservationKind,
}

/// Task executor whose leaves run trained policies where one is installed
/// and fall back to the scripted routine otherwise.
pub struct PolicyTasks {
    leaves: [Option<PolicyLeaf>; 5],
    sensors: SensorConfig,
    deterministic: bool,
    rng: ChaCha8Rng,
    buf: Vec<f32>,
}

fn task_slot(t: TaskKind) -> usize {
    TaskKind::ALL.iter().position(|&k| k == t).expect("task listed in ALL")
}

impl PolicyTasks {
    pub fn new(deterministic: bool) -> Self {
        PolicyTasks {
            leaves: Default::default(),
            sensors: SensorConfig::default(),
            deterministic,
            rng: ChaCha8Rng::seed_from_u64(0),
            buf: Vec::new(),
        }
    }

    pub fn with_policy(mut self, task: TaskKind, params: &PolicyParams) -> Self {
        self.install(task, params);
        self
    }

    pub fn install(&mut self, task: TaskKind, params: &PolicyParams) {
        self.leaves[task_slot(task)] = Some(PolicyLeaf { runner: PolicyRunner::new(params, 1), kind: observation_kind(task) });
    }

    pub fn has_policy(&self, task: TaskKind) -> bool {
        self.leaves[task_slot(task)].is_some()
    }
}

impl LeafReset for PolicyTasks {
    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        for l in self.leaves.iter_mut().flatten() {
            l.runner.reset_all();
        }
    }
}

impl TaskExecutor for PolicyTasks {
    fn run(&mut self, task: TaskKind, ctx: &mut TaskContext<'_>) -> Result<ActionCommand> {
        let Some(leaf) = self.leaves[task_slot(task)].as_mut() else {
            return Ok(scripted_task(task, ctx));
        };
        if ctx.newly_active {
            leaf.runner.reset(0);
        }
        self.buf.clear();
        encode(leaf.kind, ctx.world, ctx.id, &self.sensors, &mut self.buf)?;
        let out = leaf.runner.step_one(0, &self.buf);
        let a = out.dist.select(&mut self.rng, self.deterministic);
        let mut cmd = a.command();
        if task == TaskKind::Combat {
            // Combat was trained position-locked; only its trigger is used.
            cmd.lateral = 0.0;
            cmd.forward = 0.0;
        }
        Ok(cmd)
    }
}

pub fn hybrid_bt(tree: Arc<BehaviorTree>, leaves: PolicyTasks) -> BtController<PolicyTasks> {
    BtController::new(tree, BtSettings::default(), leaves)
}

/// One policy controls the agent directly from its observation.
pub struct PolicyController {
    runner: PolicyRunner,
    kind: ObservationKind,
    sensors: SensorConfig,
    deterministic: bool,
    rng: ChaCha8Rng,
    buf: Vec<f32>,
    last: Option<SampledAction>,
}

impl PolicyController {
    pub fn new(params: &PolicyParams, kind: ObservationKind, deterministic: bool) -> Self {
        PolicyController {
            runner: PolicyRunner::new(params, 1),
            kind,
            sensors: SensorConfig::default(),
            deterministic,
            rng: ChaCha8Rng::seed_from_u64(0),
            buf: Vec::new(),
            last: None,
        }
    }

    pub fn last_action(&self) -> Option<SampledAction> {
        self.last
    }
}

impl Controller for PolicyController {
    fn reset(&mut self, seed: u64) {
        self.runner.reset_all();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.last = None;
    }

    fn act(&mut self, world: &WorldState, id: AgentId) -> Result<ActionCommand> {
        self.buf.clear();
        encode(self.kind, world, id, &self.sensors, &mut self.buf)?;
        let out = self.runner.step_one(0, &self.buf);
        let a = out.dist.select(&mut self.rng, self.deterministic);
        self.last = Some(a);
        Ok(a.command())
    }
}
