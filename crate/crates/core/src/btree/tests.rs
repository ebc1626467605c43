use proptest::prelude::*;

use super::*;
use crate::arena::{place_agents, spawn_episode, ActionCommand, AgentId, ArenaConfig, WorldState};
use crate::error::Error;
use crate::geom::Vec2;

struct Recorder(Vec<TaskKind>);

impl TaskExecutor for Recorder {
    fn run(&mut self, task: TaskKind, _ctx: &mut TaskContext<'_>) -> crate::Result<ActionCommand> {
        self.0.push(task);
        Ok(ActionCommand::new(0.25, 0.5, false))
    }
}

fn open_world(a: Vec2, b: Vec2) -> WorldState {
    let cfg = ArenaConfig { obstacles: vec![], stations: vec![], ..ArenaConfig::default() };
    place_agents(&cfg, &[a, b], 1).unwrap()
}

fn run(tree: &BehaviorTree, world: &WorldState) -> (Vec<TaskKind>, ActionCommand, TickTrace) {
    let mut rec = Recorder(vec![]);
    let mut bb = Blackboard::new();
    let (a, t) = tick(tree, &mut bb, &BtSettings::default(), world, AgentId(0), &mut rec).unwrap();
    (rec.0, a, t)
}

#[test]
fn parse_single_task() {
    let t = parse_tree("(task combat)").unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t.node(0).kind, NodeKind::Task(TaskKind::Combat));
    assert_eq!(parse_tree("(task advance)").unwrap().node(0).kind, NodeKind::Task(TaskKind::Search));
    assert_eq!(parse_tree("(task move)").unwrap().node(0).kind, NodeKind::Task(TaskKind::Collect));
}

#[test]
fn default_tree_golden() {
    let t = BehaviorTree::default_tree();
    assert_eq!(
        t.to_dsl(),
        "(selector (sequence (not (healthy)) (selector (sequence (dist-lt 1000) (task flee)) (task hide))) \
         (sequence (ammo-empty) (task collect)) (sequence (in-sight) (task combat)) (task search))"
    );
    assert_eq!(t.node(0).kind, NodeKind::Selector);
    assert_eq!(t.node(0).children.len(), 4);
    assert_eq!(t.len(), 16);
    let tasks: Vec<_> = t.task_nodes().map(|(_, k)| k).collect();
    assert_eq!(tasks, vec![TaskKind::Flee, TaskKind::Hide, TaskKind::Collect, TaskKind::Combat, TaskKind::Search]);
    assert_eq!(parse_tree(&t.to_dsl()).unwrap(), t);
}

#[test]
fn aggressive_tree_is_default_without_evasion() {
    let pruned = BehaviorTree::default_tree().without_tasks(&[TaskKind::Flee, TaskKind::Hide]).unwrap();
    assert_eq!(pruned, BehaviorTree::aggressive_tree());
}

#[test]
fn parse_errors() {
    match parse_tree("(selector)") {
        Err(Error::Parse { line: 1, column: 1, message }) => assert!(message.contains("arity")),
        other => panic!("{:?}", other),
    }
    match parse_tree("(selector\n  (task combat)\n  (dist-lt 1x0))") {
        Err(Error::Parse { line: 3, column: 12, message }) => assert!(message.contains("malformed number")),
        other => panic!("{:?}", other),
    }
    assert!(matches!(parse_tree("(frobnicate)"), Err(Error::Parse { line: 1, column: 2, .. })));
    assert!(matches!(parse_tree("(task dance)"), Err(Error::Parse { .. })));
    assert!(matches!(parse_tree("(not (healthy) (healthy))"), Err(Error::Parse { .. })));
    assert!(matches!(parse_tree("(healthy 3)"), Err(Error::Parse { .. })));
    assert!(matches!(parse_tree("(task combat"), Err(Error::Parse { .. })));
    assert!(matches!(parse_tree("(task combat) (task flee)"), Err(Error::Parse { .. })));
    assert!(matches!(parse_tree(""), Err(Error::Parse { .. })));
    assert!(parse_tree("; comment\n(task hide) ; trailing").is_ok());
}

#[test]
fn selector_skips_failing_branch() {
    let w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(3500.0, 2000.0));
    let t = parse_tree("(selector (sequence (dist-lt 100) (task flee)) (task hide))").unwrap();
    let (tasks, action, trace) = run(&t, &w);
    assert_eq!(tasks, vec![TaskKind::Hide]);
    assert_eq!(action, ActionCommand::new(0.25, 0.5, false));
    assert_eq!(trace.active, Some((4, TaskKind::Hide)));
    assert_eq!(trace.status_of(2), Some(Status::Failure));
    assert_eq!(trace.status_of(0), Some(Status::Running));
    assert_eq!(trace.status_of(3), None);
}

#[test]
fn unreachable_task_is_flagged_noop() {
    let w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(3500.0, 2000.0));
    let t = parse_tree("(sequence (dist-lt 10) (task combat))").unwrap();
    let (tasks, action, trace) = run(&t, &w);
    assert!(tasks.is_empty());
    assert_eq!(action, ActionCommand::IDLE);
    assert!(trace.no_task);
    assert_eq!(trace.status_of(0), Some(Status::Failure));
}

#[test]
fn conditions() {
    let s = BtSettings::default();
    let mut w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(1999.0, 2000.0));
    let id = AgentId(0);
    assert!(eval_condition(&ConditionKind::DistLt(1000.0), &w, id, &s));
    assert!(!eval_condition(&ConditionKind::DistGt(1000.0), &w, id, &s));
    assert!(eval_condition(&ConditionKind::Healthy, &w, id, &s));
    assert!(eval_condition(&ConditionKind::InSight, &w, id, &s));
    assert!(!eval_condition(&ConditionKind::AmmoEmpty, &w, id, &s));

    w.agents[0].health = 40.0;
    assert!(!eval_condition(&ConditionKind::Healthy, &w, id, &s));

    // Back at 100 now, but dipped to 45 ten steps ago inside the 90-step window.
    let a = &mut w.agents[0];
    a.health = 100.0;
    a.health_history.clear();
    for k in 0..90 {
        a.health_history.push_back(if k == 79 { 45.0 } else { 100.0 });
    }
    assert!(!eval_condition(&ConditionKind::Healthy, &w, id, &s));
    let oracle_min = w.agents[0].health_history.iter().rev().take(90).cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(oracle_min, 45.0);

    w.agents[0].ammo = 0;
    assert!(eval_condition(&ConditionKind::AmmoEmpty, &w, id, &s));
}

#[test]
fn empty_ammo_prefers_collect_over_combat() {
    let mut w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(1500.0, 2000.0));
    w.agents[0].ammo = 0;
    let (tasks, _, _) = run(&BehaviorTree::default_tree(), &w);
    assert_eq!(tasks, vec![TaskKind::Collect]);
}

#[test]
fn combat_fires_when_aligned_with_line_of_sight() {
    let w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(1500.0, 2000.0));
    let t = parse_tree("(task combat)").unwrap();
    let mut bb = Blackboard::new();
    let (a, _) = tick(&t, &mut bb, &BtSettings::default(), &w, AgentId(0), &mut ScriptedTasks).unwrap();
    assert_eq!(a, ActionCommand { shoot: true, ..ActionCommand::IDLE });

    // Facing 10 degrees off: no shot.
    let mut w2 = w.clone();
    w2.agents[0].facing = Vec2::from_angle(10f64.to_radians());
    let (a, _) = tick(&t, &mut Blackboard::new(), &BtSettings::default(), &w2, AgentId(0), &mut ScriptedTasks).unwrap();
    assert!(!a.shoot);

    // Obstacle in between: no shot.
    let cfg = ArenaConfig { obstacles: vec![[1200.0, 1900.0, 1300.0, 2100.0]], stations: vec![], ..ArenaConfig::default() };
    let w3 = place_agents(&cfg, &[Vec2::new(1000.0, 2000.0), Vec2::new(1500.0, 2000.0)], 1).unwrap();
    let (a, _) = tick(&t, &mut Blackboard::new(), &BtSettings::default(), &w3, AgentId(0), &mut ScriptedTasks).unwrap();
    assert!(!a.shoot);
}

#[test]
fn search_on_clear_line_moves_straight_forward() {
    let w = open_world(Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 2500.0));
    let t = parse_tree("(task search)").unwrap();
    let (a, _) = tick(&t, &mut Blackboard::new(), &BtSettings::default(), &w, AgentId(0), &mut ScriptedTasks).unwrap();
    assert!((a.forward - 1.0).abs() < 1e-12);
    assert!(a.lateral.abs() < 1e-12);
    assert!(!a.shoot);
}

#[test]
fn collect_without_stations_holds_position() {
    let mut w = open_world(Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 2500.0));
    let t = parse_tree("(task collect)").unwrap();
    let (a, _) = tick(&t, &mut Blackboard::new(), &BtSettings::default(), &w, AgentId(0), &mut ScriptedTasks).unwrap();
    assert_eq!(a, ActionCommand::IDLE);

    w.ammo_stations.push(crate::arena::AmmoStation { position: Vec2::new(1000.0, 500.0), respawn_timer: 0 });
    let (a, _) = tick(&t, &mut Blackboard::new(), &BtSettings::default(), &w, AgentId(0), &mut ScriptedTasks).unwrap();
    let dir = Vec2::new(a.forward, a.lateral);
    assert!(dir.length() > 0.99);
}

#[test]
fn scripted_agent_reaches_station_around_obstacle() {
    let cfg = ArenaConfig {
        obstacles: vec![[900.0, 600.0, 1100.0, 1400.0]],
        stations: vec![[1500.0, 1000.0]],
        ..ArenaConfig::default()
    };
    let mut w = place_agents(&cfg, &[Vec2::new(500.0, 1000.0), Vec2::new(3500.0, 3500.0)], 1).unwrap();
    w.agents[0].ammo = 0;
    let t = parse_tree("(task collect)").unwrap();
    let mut bb = Blackboard::new();
    let s = BtSettings::default();
    let mut picked = false;
    for _ in 0..200 {
        let (a, _) = tick(&t, &mut bb, &s, &w, AgentId(0), &mut ScriptedTasks).unwrap();
        let ev = w.step(&[(AgentId(0), a), (AgentId(1), ActionCommand::IDLE)]).unwrap();
        if !ev.agents[0].ammo_pickups.is_empty() {
            picked = true;
            break;
        }
    }
    assert!(picked);
}

#[test]
fn tick_dead_agent_errors() {
    let mut w = open_world(Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 2500.0));
    w.agents[0].health = 0.0;
    let r = tick(&BehaviorTree::default_tree(), &mut Blackboard::new(), &BtSettings::default(), &w, AgentId(0), &mut ScriptedTasks);
    assert!(matches!(r, Err(Error::AgentDead(_))));
}

#[test]
fn trace_line_format() {
    let w = open_world(Vec2::new(1000.0, 2000.0), Vec2::new(1500.0, 2000.0));
    let tree = BehaviorTree::default_tree();
    let (_, _, trace) = run(&tree, &w);
    let line = trace.to_line(&tree);
    assert!(line.starts_with("s=0 a=#0 "), "{}", line);
    assert!(line.ends_with("active=14:combat"), "{}", line);
    assert!(line.contains("3:healthy=S 2:not=F"));
}

// Reference semantics over a pointer tree with every leaf evaluated eagerly.
fn reference(spec: &NodeSpec, next: &mut usize, statuses: &[Status], out: &mut Vec<Status>) -> Status {
    let id = *next;
    *next += 1;
    let child: Vec<Status> = spec.children.iter().map(|c| reference(c, next, statuses, out)).collect();
    let s = match spec.kind {
        NodeKind::Selector => {
            let mut r = Status::Failure;
            for c in child {
                if c != Status::Failure {
                    r = c;
                    break;
                }
            }
            r
        }
        NodeKind::Sequence => {
            let mut r = Status::Success;
            for c in child {
                if c != Status::Success {
                    r = c;
                    break;
                }
            }
            r
        }
        NodeKind::Not => match child[0] {
            Status::Success => Status::Failure,
            Status::Failure => Status::Success,
            Status::Running => Status::Running,
        },
        _ => statuses[id % statuses.len()],
    };
    out[id] = s;
    s
}

struct Fixed<'a>(&'a [Status]);

impl LeafDriver for Fixed<'_> {
    fn leaf(&mut self, id: usize, _: &NodeKind) -> Status {
        self.0[id % self.0.len()]
    }
}

pub(crate) fn arb_tree() -> impl Strategy<Value = NodeSpec> {
    let leaf = prop_oneof![
        Just(NodeSpec::leaf(NodeKind::Condition(ConditionKind::InSight))),
        Just(NodeSpec::leaf(NodeKind::Condition(ConditionKind::Healthy))),
        Just(NodeSpec::leaf(NodeKind::Task(TaskKind::Combat))),
    ];
    leaf.prop_recursive(3, 40, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(|c| NodeSpec { kind: NodeKind::Selector, children: c }),
            prop::collection::vec(inner.clone(), 1..4).prop_map(|c| NodeSpec { kind: NodeKind::Sequence, children: c }),
            inner.prop_map(|c| NodeSpec { kind: NodeKind::Not, children: vec![c] }),
        ]
    })
}

pub(crate) fn arb_status() -> impl Strategy<Value = Status> {
    prop_oneof![Just(Status::Success), Just(Status::Failure), Just(Status::Running)]
}

/// Checks the walker against the reference truth table; returns a message on mismatch.
pub fn check_truth_table(spec: &NodeSpec, statuses: &[Status]) -> Result<(), String> {
    let tree = BehaviorTree::from_spec(spec).map_err(|e| e.to_string())?;
    let mut full = vec![Status::Failure; tree.len()];
    let want = reference(spec, &mut 0, statuses, &mut full);
    let mut trace = Vec::new();
    let got = walk(&tree, &mut Fixed(statuses), &mut trace);
    if got != want {
        return Err(format!("root {:?} != reference {:?} for {}", got, want, tree.to_dsl()));
    }
    for (id, s) in trace {
        if full[id] != s {
            return Err(format!("node {} {:?} != reference {:?}", id, s, full[id]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn walker_matches_truth_table(spec in arb_tree(), statuses in prop::collection::vec(arb_status(), 1..64)) {
        prop_assert!(depth(&spec) <= 4);
        check_truth_table(&spec, &statuses).map_err(TestCaseError::fail)?;
    }
}

fn depth(s: &NodeSpec) -> usize {
    1 + s.children.iter().map(depth).max().unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn active_leaf_matches_condition_branch(
        seed in 0u64..100_000,
        health in 1.0f64..100.0,
        dip in 1.0f64..100.0,
        ammo in 0u32..3,
    ) {
        let mut cfg = ArenaConfig::evaluation();
        cfg.spawn.min_separation = 0.0;
        let mut w = spawn_episode(&cfg, seed).unwrap();
        let a = &mut w.agents[0];
        a.health = health;
        a.health_history.push_back(dip);
        a.ammo = ammo;
        let s = BtSettings::default();
        let id = AgentId(0);
        let healthy = eval_condition(&ConditionKind::Healthy, &w, id, &s);
        prop_assert_eq!(healthy, health >= 50.0 && dip >= 50.0);
        let me = w.agent(id).position;
        let them = w.agent(AgentId(1)).position;
        let expected = if !healthy {
            if me.distance(them) < 1000.0 { TaskKind::Flee } else { TaskKind::Hide }
        } else if ammo == 0 {
            TaskKind::Collect
        } else if w.line_of_sight(me, them) {
            TaskKind::Combat
        } else {
            TaskKind::Search
        };
        let (tasks, _, trace) = run(&BehaviorTree::default_tree(), &w);
        prop_assert_eq!(tasks, vec![expected]);
        prop_assert_eq!(trace.active.map(|a| a.1), Some(expected));
        let (_, _, again) = run(&BehaviorTree::default_tree(), &w);
        prop_assert_eq!(trace, again);
    }
}
