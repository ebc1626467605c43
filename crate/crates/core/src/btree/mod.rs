//! Behavior trees: DSL parser, tick engine, scripted tasks, spatial queries and
//! grid navigation.

mod eqs;
mod nav;
mod scripted;
mod tick;
mod tree;

pub use eqs::{candidates, eqs_query, eqs_query_with, score, EqsCriteria, EqsTerm, DEFAULT_SAMPLES, RING_DIRECTIONS, RING_RADII};
pub use nav::{plan_path, Cell, NavGrid, CELL_SIZE};
pub use scripted::{aimed, combat, follow, scripted_task, ScriptedTasks};
pub use tick::{
    eval_condition, tick, walk, Blackboard, BtSettings, EqsCache, LeafDriver, Status, TaskContext, TaskExecutor, TickTrace,
};
pub use tree::{parse_tree, BehaviorTree, ConditionKind, Node, NodeKind, NodeSpec, TaskKind, AGGRESSIVE_TREE, DEFAULT_TREE};

#[cfg(test)]
mod tests;
