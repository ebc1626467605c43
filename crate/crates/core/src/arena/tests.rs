use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::geom::Vec2;

fn open_config(side: f64) -> ArenaConfig {
    ArenaConfig { side, obstacles: vec![], stations: vec![], ..ArenaConfig::default() }
}

fn idle(world: &WorldState) -> Vec<(AgentId, ActionCommand)> {
    world.agents.iter().map(|a| (a.id, ActionCommand::IDLE)).collect()
}

#[test]
fn spawn_is_deterministic() {
    let cfg = ArenaConfig::evaluation();
    let a = spawn_episode(&cfg, 7).unwrap();
    let b = spawn_episode(&cfg, 7).unwrap();
    assert_eq!(a.canonical_bytes(), b.canonical_bytes());
    let c = spawn_episode(&cfg, 8).unwrap();
    assert_ne!(a.canonical_bytes(), c.canonical_bytes());
}

#[test]
fn evaluation_arena_has_eight_stations() {
    let w = spawn_episode(&ArenaConfig::evaluation(), 3).unwrap();
    assert_eq!(w.ammo_stations.len(), 8);
    w.check_invariants().unwrap();
}

#[test]
fn spawn_respects_min_separation() {
    let mut cfg = open_config(4000.0);
    cfg.spawn.min_separation = 1500.0;
    for seed in 0..50 {
        let w = spawn_episode(&cfg, seed).unwrap();
        assert!(w.agents[0].position.distance(w.agents[1].position) >= 1500.0);
    }
}

#[test]
fn spawn_reports_over_constrained_config() {
    let mut cfg = open_config(1000.0);
    cfg.spawn.min_separation = 5000.0;
    cfg.max_spawn_attempts = 500;
    assert!(matches!(spawn_episode(&cfg, 1), Err(crate::Error::SpawnFailed { .. })));
}

#[test]
fn spawn_occlusion_rule_holds() {
    let mut cfg = ArenaConfig::desk();
    cfg.random_obstacles = Some(RandomObstacles { count: 4, min_length: 150.0, max_length: 300.0, thickness: Some(30.0), margin: 60.0 });
    cfg.spawn.require_occluded = true;
    for seed in 0..20 {
        let w = spawn_episode(&cfg, seed).unwrap();
        assert!(!w.line_of_sight(w.agents[0].position, w.agents[1].position));
        w.check_invariants().unwrap();
    }
}

#[test]
fn zero_actions_leave_positions_unchanged() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 1000.0)], 0).unwrap();
    let before: Vec<_> = w.agents.iter().map(|a| a.position).collect();
    w.step(&idle(&w)).unwrap();
    assert_eq!(w.step, 1);
    for (a, p) in w.agents.iter().zip(before) {
        assert_eq!(a.position, p);
    }
}

#[test]
fn full_forward_moves_twenty_units_toward_target() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(1000.0, 3000.0)], 0).unwrap();
    let acts = vec![(AgentId(0), ActionCommand::new(0.0, 1.0, false)), (AgentId(1), ActionCommand::IDLE)];
    w.step(&acts).unwrap();
    let p = w.agents[0].position;
    // 600 u/s * (1/30) s
    assert_relative_eq!(p.x, 1000.0, epsilon = 1e-9);
    assert_relative_eq!(p.y, 1020.0, epsilon = 1e-9);
}

#[test]
fn diagonal_input_is_norm_clamped() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 1000.0)], 0).unwrap();
    w.step(&[(AgentId(0), ActionCommand::new(1.0, 1.0, false)), (AgentId(1), ActionCommand::IDLE)]).unwrap();
    assert_relative_eq!(w.agents[0].position.distance(Vec2::new(1000.0, 1000.0)), 20.0, epsilon = 1e-9);
}

#[test]
fn firing_consumes_ammo_and_sets_cooldown() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 1000.0)], 0).unwrap();
    let shoot = vec![(AgentId(0), ActionCommand::new(0.0, 0.0, true)), (AgentId(1), ActionCommand::IDLE)];
    let ev = w.step(&shoot).unwrap();
    assert_eq!(ev.agents[0].shots_fired, 1);
    assert_eq!(w.agents[0].ammo, 9);
    assert_eq!(w.projectiles.len(), 1);
    assert_eq!(w.agents[0].cooldown, 5);
    // Next four steps are blocked by the cooldown, the fifth fires.
    for _ in 0..4 {
        let ev = w.step(&shoot).unwrap();
        assert_eq!(ev.agents[0].shots_fired, 0);
    }
    let ev = w.step(&shoot).unwrap();
    assert_eq!(ev.agents[0].shots_fired, 1);
    assert_eq!(w.agents[0].ammo, 8);
}

#[test]
fn projectile_hit_deals_ten_damage() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(1400.0, 1000.0)], 0).unwrap();
    let mut acts = vec![(AgentId(0), ActionCommand::new(0.0, 0.0, true)), (AgentId(1), ActionCommand::IDLE)];
    let mut hit = false;
    for _ in 0..10 {
        let ev = w.step(&acts).unwrap();
        acts[0].1.shoot = false;
        if ev.agents[1].hits_taken > 0 {
            assert_eq!(ev.agents[0].hits_landed, vec![AgentId(1)]);
            hit = true;
            break;
        }
    }
    assert!(hit);
    assert_eq!(w.agents[1].health, 90.0);
    assert_eq!(w.agents[0].damage_dealt, 10.0);
    assert!(w.projectiles.is_empty());
}

#[test]
fn ten_hits_kill() {
    let mut cfg = open_config(4000.0);
    cfg.agents[0].unlimited_ammo = true;
    let mut w = place_agents(&cfg, &[Vec2::new(1000.0, 1000.0), Vec2::new(1300.0, 1000.0)], 0).unwrap();
    let acts = vec![(AgentId(0), ActionCommand::new(0.0, 0.0, true)), (AgentId(1), ActionCommand::IDLE)];
    let mut kills = 0;
    for _ in 0..200 {
        if !w.agents[1].is_alive() {
            break;
        }
        let ev = w.step(&acts).unwrap();
        kills += ev.agents[0].kills.len();
    }
    assert_eq!(kills, 1);
    assert_eq!(w.agents[1].health, 0.0);
    assert_eq!(w.agents[0].damage_dealt, 100.0);
    assert_eq!(w.agents[0].ammo, 10);
    // Dead agents need no action.
    w.step(&[(AgentId(0), ActionCommand::IDLE)]).unwrap();
}

#[test]
fn obstacle_blocks_projectile_and_movement() {
    let mut cfg = open_config(4000.0);
    cfg.obstacles = vec![[1150.0, 900.0, 1200.0, 1100.0]];
    let mut w = place_agents(&cfg, &[Vec2::new(1000.0, 1000.0), Vec2::new(1400.0, 1000.0)], 0).unwrap();
    let acts = vec![(AgentId(0), ActionCommand::new(0.0, 1.0, true)), (AgentId(1), ActionCommand::IDLE)];
    let mut collisions = 0;
    for _ in 0..30 {
        let ev = w.step(&acts).unwrap();
        assert_eq!(ev.agents[1].hits_taken, 0);
        collisions += ev.agents[0].wall_collisions;
        w.check_invariants().unwrap();
    }
    assert!(collisions > 0);
    // Stopped at the inflated face: 1150 - 50.
    assert_relative_eq!(w.agents[0].position.x, 1100.0);
}

#[test]
fn ammo_pickup_and_respawn() {
    let mut cfg = open_config(4000.0);
    cfg.stations = vec![[1000.0, 1000.0]];
    cfg.agents[0].start_ammo = Some(0);
    let mut w = place_agents(&cfg, &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 1000.0)], 0).unwrap();
    let ev = w.step(&idle(&w)).unwrap();
    assert_eq!(ev.agents[0].ammo_pickups, vec![Pickup { station: 0, ammo_before: 0 }]);
    assert_eq!(w.agents[0].ammo, 10);
    assert_eq!(w.ammo_stations[0].respawn_timer, 300);
    for _ in 0..299 {
        let ev = w.step(&idle(&w)).unwrap();
        assert!(ev.agents[0].ammo_pickups.is_empty());
    }
    let ev = w.step(&idle(&w)).unwrap();
    assert_eq!(ev.agents[0].ammo_pickups.len(), 1);
    assert_eq!(w.agents[0].ammo, 20);
}

#[test]
fn locked_agents_only_turn() {
    let mut cfg = open_config(4000.0);
    cfg.agents[0].locked = true;
    let mut w = place_agents(&cfg, &[Vec2::new(1000.0, 1000.0), Vec2::new(2000.0, 1000.0)], 0).unwrap();
    w.agents[0].facing = Vec2::new(-1.0, 0.0);
    for _ in 0..40 {
        w.step(&[(AgentId(0), ActionCommand::new(1.0, 1.0, false)), (AgentId(1), ActionCommand::IDLE)]).unwrap();
        assert_eq!(w.agents[0].position, Vec2::new(1000.0, 1000.0));
    }
    // 180 degrees at 6 degrees per step is done well within 40 steps.
    assert_eq!(w.agents[0].facing, Vec2::new(1.0, 0.0));
}

#[test]
fn action_validation_errors() {
    let mut w = place_agents(&open_config(4000.0), &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 1000.0)], 0).unwrap();
    let e = w.step(&[(AgentId(0), ActionCommand::IDLE), (AgentId(1), ActionCommand::IDLE), (AgentId(5), ActionCommand::IDLE)]);
    assert!(matches!(e, Err(crate::Error::UnknownAgent(AgentId(5)))));
    let e = w.step(&[(AgentId(0), ActionCommand::new(f64::NAN, 0.0, false)), (AgentId(1), ActionCommand::IDLE)]);
    assert!(matches!(e, Err(crate::Error::NonFiniteAction(_))));
    let e = w.step(&[(AgentId(0), ActionCommand::IDLE)]);
    assert!(matches!(e, Err(crate::Error::MissingAction(AgentId(1)))));
    assert_eq!(w.step, 0);
}

#[test]
fn raycast_examples() {
    let mut cfg = open_config(4000.0);
    let w = place_agents(&cfg, &[Vec2::new(1000.0, 1000.0), Vec2::new(3000.0, 3000.0)], 0).unwrap();
    // Only walls in an empty arena; masking them out leaves nothing.
    assert!(w.raycast(Vec2::new(2000.0, 2000.0), Vec2::new(0.0, 1.0), 1000.0, CategoryMask::ALL).is_none());
    assert!(w.raycast(Vec2::new(2000.0, 2000.0), Vec2::new(0.0, 1.0), 5000.0, CategoryMask::AGENT).is_none());

    cfg.obstacles = vec![[1100.0, 900.0, 1200.0, 1100.0]];
    let w = place_agents(&cfg, &[Vec2::new(500.0, 500.0), Vec2::new(1200.0, 2000.0)], 0).unwrap();
    let hit = w.raycast(Vec2::new(1000.0, 1000.0), Vec2::new(1.0, 0.0), 2000.0, CategoryMask::ALL).unwrap();
    assert_relative_eq!(hit.distance, 100.0);
    assert_eq!(hit.kind, HitKind::Obstacle(0));

    let w = place_agents(&open_config(4000.0), &[Vec2::new(500.0, 500.0), Vec2::new(1200.0, 1000.0)], 0).unwrap();
    let hit = w.raycast(Vec2::new(1000.0, 1000.0), Vec2::new(1.0, 0.0), 2000.0, CategoryMask::ALL).unwrap();
    assert_relative_eq!(hit.distance, 150.0);
    assert_eq!(hit.kind, HitKind::Agent(AgentId(1)));
}

#[test]
fn line_of_sight_examples() {
    let mut cfg = open_config(4000.0);
    cfg.obstacles = vec![[1900.0, 1000.0, 2100.0, 3000.0]];
    let w = place_agents(&cfg, &[Vec2::new(500.0, 500.0), Vec2::new(3500.0, 500.0)], 0).unwrap();
    let a = Vec2::new(1000.0, 2000.0);
    let b = Vec2::new(3000.0, 2000.0);
    assert!(w.line_of_sight(a, a));
    assert!(!w.line_of_sight(a, b));
    assert!(!w.line_of_sight(b, a));
    assert!(w.line_of_sight(Vec2::new(1000.0, 500.0), Vec2::new(3000.0, 500.0)));
}

#[test]
fn trace_lines_are_stable() {
    let mut w = spawn_episode(&ArenaConfig::evaluation(), 11).unwrap();
    let mut v = spawn_episode(&ArenaConfig::evaluation(), 11).unwrap();
    for _ in 0..20 {
        assert_eq!(w.trace_line(), v.trace_line());
        let acts = idle(&w);
        w.step(&acts).unwrap();
        v.step(&acts).unwrap();
    }
}

fn action_strategy() -> impl Strategy<Value = ActionCommand> {
    (-1.5f64..1.5, -1.5f64..1.5, any::<bool>()).prop_map(|(l, f, s)| ActionCommand::new(l, f, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_invariants_hold(seed in 0u64..10_000, script in proptest::collection::vec((action_strategy(), action_strategy()), 1..120)) {
        let mut w = spawn_episode(&ArenaConfig::evaluation(), seed).unwrap();
        w.spawn_tweak_for_contact();
        for (a0, a1) in script {
            let before = w.clone();
            let mut acts = Vec::new();
            for (id, a) in [(AgentId(0), a0), (AgentId(1), a1)] {
                if w.agent(id).is_alive() {
                    acts.push((id, a));
                }
            }
            let ev = w.step(&acts).unwrap();
            prop_assert_eq!(w.step, before.step + 1);
            w.check_invariants().map_err(TestCaseError::fail)?;
            for (i, a) in w.agents.iter().enumerate() {
                let b = &before.agents[i];
                let e = &ev.agents[i];
                prop_assert!((b.health - a.health - 10.0 * e.hits_taken as f64).abs() < 1e-9);
                let picked: u32 = e.ammo_pickups.len() as u32 * 10;
                prop_assert_eq!(a.ammo as i64, b.ammo as i64 + picked as i64 - e.shots_fired as i64);
                prop_assert!(a.position.distance(b.position) <= 600.0 / 30.0 + 1e-9);
                prop_assert_eq!(a.damage_dealt - b.damage_dealt, 10.0 * e.hits_landed.len() as f64);
            }
        }
    }
}

impl WorldState {
    /// Pulls agent 1 close to agent 0 so random scripts see combat.
    fn spawn_tweak_for_contact(&mut self) {
        let p0 = self.agents[0].position;
        let candidate = Vec2::new((p0.x + 300.0).min(self.arena_side - 60.0), p0.y);
        let r = self.physics.agent_radius;
        if self.obstacles.iter().all(|o| !o.inflate(r).contains_open(candidate)) && self.line_of_sight(p0, candidate) {
            self.agents[1].position = candidate;
        }
    }
}
