//! Reset/step environments wrapping the arena with a scripted opponent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::reward::{skill_reward, Transition};
use crate::arena::{spawn_episode, ActionCommand, AgentId, WorldState};
use crate::controller::Controller;
use crate::error::Result;
use crate::sensors::encode;

pub const LEARNER: AgentId = AgentId(0);
pub const OPPONENT: AgentId = AgentId(1);

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f32>,
    pub reward: f64,
    /// A terminal rule fired or an agent died.
    pub done: bool,
    pub transition: Transition,
}

/// The reset/step contract shared by trainers and evaluators.
pub trait Environment: Send {
    fn observation_width(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f32>>;
    fn step(&mut self, action: ActionCommand) -> Result<EnvStep>;
    /// Complete mid-episode state, for checkpoints.
    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::Value::Null)
    }
    fn restore(&mut self, _state: serde_json::Value) -> Result<()> {
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SkillEnvState {
    world: Option<WorldState>,
    opponent: serde_json::Value,
    steps: u64,
}

pub struct SkillEnv {
    config: Arc<EnvConfig>,
    opponent: Box<dyn Controller>,
    world: Option<WorldState>,
    steps: u64,
}

pub fn make_skill_env(config: &EnvConfig, seed: u64) -> Result<(SkillEnv, Vec<f32>)> {
    let mut env = SkillEnv::new(config.clone())?;
    let obs = env.reset(seed)?;
    Ok((env, obs))
}

impl SkillEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let opponent = config.opponent.build()?;
        Ok(SkillEnv { config: Arc::new(config), opponent, world: None, steps: 0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// The current world. Panics before the first reset.
    pub fn world(&self) -> &WorldState {
        self.world.as_ref().expect("environment was reset")
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn observe(&self, out: &mut Vec<f32>) -> Result<()> {
        encode(self.config.observation, self.world(), LEARNER, &self.config.sensors, out)
    }
}

impl Environment for SkillEnv {
    fn observation_width(&self) -> usize {
        self.config.observation.width()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f32>> {
        self.world = Some(spawn_episode(&self.config.arena, seed)?);
        self.opponent.reset(seed ^ 0x9e37_79b9_7f4a_7c15);
        self.steps = 0;
        let mut obs = Vec::with_capacity(self.observation_width());
        self.observe(&mut obs)?;
        Ok(obs)
    }

    fn step(&mut self, action: ActionCommand) -> Result<EnvStep> {
        let world = self.world.as_mut().expect("environment was reset");
        let opp = if world.agent(OPPONENT).is_alive() { self.opponent.act(world, OPPONENT)? } else { ActionCommand::IDLE };
        let health_before = world.agent(LEARNER).health;
        let events = world.step(&[(LEARNER, action), (OPPONENT, opp)])?;
        self.steps += 1;
        let t = Transition::from_events(world, &events, LEARNER, OPPONENT, health_before);
        let (reward, terminal) = skill_reward(&self.config.reward, &t);
        let done = terminal || t.died || !world.agent(OPPONENT).is_alive();
        let mut observation = Vec::with_capacity(self.observation_width());
        if done {
            observation.resize(self.observation_width(), 0.0);
        } else {
            self.observe(&mut observation)?;
        }
        Ok(EnvStep { observation, reward, done, transition: t })
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        let state = SkillEnvState { world: self.world.clone(), opponent: self.opponent.snapshot(), steps: self.steps };
        Ok(serde_json::to_value(state)?)
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        let s: SkillEnvState = serde_json::from_value(state)?;
        self.world = s.world;
        self.opponent.restore(s.opponent)?;
        self.steps = s.steps;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btree::TaskKind;

    fn run<F: FnMut(&SkillEnv) -> ActionCommand>(cfg: EnvConfig, seed: u64, n: usize, mut policy: F) -> (SkillEnv, Vec<EnvStep>) {
        let (mut env, _) = make_skill_env(&cfg, seed).unwrap();
        let mut out = Vec::new();
        for _ in 0..n {
            let a = policy(&env);
            let s = env.step(a).unwrap();
            let done = s.done;
            out.push(s);
            if done {
                break;
            }
        }
        (env, out)
    }

    #[test]
    fn flee_pursuer_closes_ten_units_per_step() {
        let cfg = EnvConfig::skill(TaskKind::Flee);
        let (mut env, _) = make_skill_env(&cfg, 3).unwrap();
        let mut prev = env.world().agent(OPPONENT).position;
        for _ in 0..20 {
            env.step(ActionCommand::IDLE).unwrap();
            let p = env.world().agent(OPPONENT).position;
            assert!((p.distance(prev) - 10.0).abs() < 1e-9);
            prev = p;
        }
    }

    #[test]
    fn hide_pursuer_speed() {
        let cfg = EnvConfig::skill(TaskKind::Hide);
        let (mut env, _) = make_skill_env(&cfg, 4).unwrap();
        let p0 = env.world().agent(OPPONENT).position;
        env.step(ActionCommand::IDLE).unwrap();
        let moved = env.world().agent(OPPONENT).position.distance(p0);
        assert!(moved <= 100.0 / 30.0 + 1e-9);
        assert!(moved > 0.0);
    }

    #[test]
    fn combat_positions_never_change() {
        let cfg = EnvConfig::skill(TaskKind::Combat);
        let (env, steps) = run(cfg.clone(), 5, 300, |_| ActionCommand::new(1.0, -1.0, true));
        let (fresh, _) = make_skill_env(&cfg, 5).unwrap();
        for id in [LEARNER, OPPONENT] {
            assert_eq!(env.world().agent(id).position, fresh.world().agent(id).position);
        }
        assert!(steps.iter().any(|s| s.transition.hits_landed > 0));
    }

    #[test]
    fn advance_target_is_stationary() {
        let cfg = EnvConfig::skill(TaskKind::Search);
        let (env, _) = make_skill_env(&cfg, 6).unwrap();
        let start = env.world().agent(OPPONENT).position;
        let (env, _) = run(cfg, 6, 200, |_| ActionCommand::new(0.3, 1.0, false));
        assert_eq!(env.world().agent(OPPONENT).position, start);
    }

    #[test]
    fn combat_kill_ends_with_terminal_bonus() {
        let cfg = EnvConfig::skill(TaskKind::Combat);
        let (_, steps) = run(cfg, 7, 2000, |_| ActionCommand::new(0.0, 0.0, true));
        let last = steps.last().unwrap();
        assert!(last.done && last.transition.opponent_killed);
        assert_eq!(last.reward, -0.001 + 0.1 + 1.0);
    }

    #[test]
    fn observation_width_is_constant() {
        for name in EnvConfig::bundled_names() {
            let cfg = EnvConfig::bundled(name).unwrap();
            let (mut env, obs) = make_skill_env(&cfg, 1).unwrap();
            assert_eq!(obs.len(), cfg.observation.width());
            let s = env.step(ActionCommand::new(0.0, 1.0, false)).unwrap();
            assert_eq!(s.observation.len(), cfg.observation.width(), "{name}");
        }
    }

    #[test]
    fn snapshot_restore_continues_identically() {
        let cfg = EnvConfig::desk_skill(TaskKind::Collect);
        let (mut a, _) = make_skill_env(&cfg, 2).unwrap();
        for _ in 0..40 {
            a.step(ActionCommand::new(0.5, 0.5, false)).unwrap();
        }
        let snap = serde_json::to_string(&a.snapshot().unwrap()).unwrap();
        let mut b = SkillEnv::new(cfg).unwrap();
        b.restore(serde_json::from_str(&snap).unwrap()).unwrap();
        for _ in 0..100 {
            let act = ActionCommand::new(-0.2, 1.0, false);
            let (x, y) = (a.step(act).unwrap(), b.step(act).unwrap());
            assert_eq!(x, y);
            if x.done {
                break;
            }
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let cfg = EnvConfig::desk_skill(TaskKind::Collect);
        let policy = |e: &SkillEnv| ActionCommand::new(((e.steps() % 7) as f64 - 3.0) / 3.0, 1.0, false);
        let (_, a) = run(cfg.clone(), 9, 300, policy);
        let (_, b) = run(cfg, 9, 300, policy);
        assert_eq!(a, b);
    }
}
