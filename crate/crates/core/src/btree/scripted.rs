//! Hand-written task routines used by the pure behavior-tree agent.

use super::eqs::eqs_query_with;
use super::tick::{EqsCache, TaskContext, TaskExecutor};
use super::tree::TaskKind;
use crate::arena::ActionCommand;
use crate::error::Result;
use crate::geom::Vec2;
use crate::sensors::nearest_station;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedTasks;

impl TaskExecutor for ScriptedTasks {
    fn run(&mut self, task: TaskKind, ctx: &mut TaskContext<'_>) -> Result<ActionCommand> {
        Ok(scripted_task(task, ctx))
    }
}

pub fn scripted_task(task: TaskKind, ctx: &mut TaskContext<'_>) -> ActionCommand {
    match task {
        TaskKind::Combat => combat(ctx),
        TaskKind::Search => search(ctx),
        TaskKind::Flee | TaskKind::Hide => evade(task, ctx),
        TaskKind::Collect => collect(ctx),
    }
}

/// Stand still and fire once facing is within the aim tolerance with a clear line.
pub fn combat(ctx: &TaskContext<'_>) -> ActionCommand {
    ActionCommand { shoot: aimed(ctx), ..ActionCommand::IDLE }
}

pub fn aimed(ctx: &TaskContext<'_>) -> bool {
    let me = ctx.world.agent(ctx.id);
    let Some(t) = ctx.world.target_of(ctx.id) else { return false };
    let Some(dir) = (t.position - me.position).try_normalize() else { return false };
    let cos_tol = libm::cos(ctx.settings.aim_tolerance_deg.to_radians());
    me.facing.dot(dir) >= cos_tol - 1e-12 && ctx.world.line_of_sight(me.position, t.position)
}

fn search(ctx: &mut TaskContext<'_>) -> ActionCommand {
    let me = ctx.world.agent(ctx.id).position;
    let Some(actual) = ctx.world.target_of(ctx.id).map(|t| t.position) else {
        return ActionCommand::IDLE;
    };
    // Head for the last sighting; once there with nothing in view, fall back
    // to the target's true position.
    let goal = match ctx.blackboard.last_seen {
        Some((p, _)) if me.distance(p) > ctx.settings.waypoint_radius => p,
        Some(_) => {
            ctx.blackboard.last_seen = None;
            actual
        }
        None => actual,
    };
    follow(ctx, goal)
}

fn evade(task: TaskKind, ctx: &mut TaskContext<'_>) -> ActionCommand {
    let step = ctx.world.step;
    let fresh = ctx
        .blackboard
        .eqs
        .is_some_and(|c| c.task == task && step < c.step + ctx.settings.eqs_refresh_steps);
    if !fresh || ctx.newly_active {
        let grid = ctx.blackboard.nav(ctx.world);
        let criteria = if task == TaskKind::Flee { &ctx.settings.flee } else { &ctx.settings.hide };
        let point = eqs_query_with(ctx.world, &grid, ctx.id, criteria, ctx.settings.eqs_samples);
        ctx.blackboard.eqs = Some(EqsCache { task, point, step });
    }
    let goal = ctx.blackboard.eqs.map(|c| c.point).unwrap_or(ctx.world.agent(ctx.id).position);
    follow(ctx, goal)
}

fn collect(ctx: &mut TaskContext<'_>) -> ActionCommand {
    let me = ctx.world.agent(ctx.id).position;
    match nearest_station(ctx.world, me) {
        Some(i) => follow(ctx, ctx.world.ammo_stations[i].position),
        None => ActionCommand::IDLE,
    }
}

/// Path-follow toward `goal`, replanning when the goal moves, the path is
/// stale, or the path ran out.
pub fn follow(ctx: &mut TaskContext<'_>, goal: Vec2) -> ActionCommand {
    let world = ctx.world;
    let pos = world.agent(ctx.id).position;
    let s = ctx.settings;
    let bb = &mut *ctx.blackboard;
    let stale = bb.path_goal.is_none_or(|g| g.distance(goal) > s.replan_distance)
        || world.step >= bb.path_step + s.replan_steps
        || bb.path_index >= bb.path.len()
        || ctx.newly_active;
    if stale {
        let grid = bb.nav(world);
        bb.path = grid.plan(pos, goal);
        bb.path_index = 1.min(bb.path.len());
        bb.path_goal = Some(goal);
        bb.path_step = world.step;
    }
    if bb.path.is_empty() {
        return ActionCommand::IDLE;
    }
    let last = bb.path.len() - 1;
    while bb.path_index < last && pos.distance(bb.path[bb.path_index]) < s.waypoint_radius {
        bb.path_index += 1;
    }
    let wp = if bb.path_index <= last { bb.path[bb.path_index] } else { bb.path[last] };
    let delta = wp - pos;
    let dist = delta.length();
    if dist < 1e-9 {
        return ActionCommand::IDLE;
    }
    let step_len = world.agent(ctx.id).speed * world.dt();
    let mag = if bb.path_index >= last { (dist / step_len).min(1.0) } else { 1.0 };
    ActionCommand::toward(delta * (mag / dist), world.forward_axis(ctx.id), false)
}
