//! Reward constants, terminal rules and the per-step reward function.

use serde::{Deserialize, Serialize};

use crate::arena::{AgentId, StepEvents, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalEvent {
    /// Opponent closer than the rule's distance.
    Caught,
    /// Learner and opponent have line of sight.
    InSight,
    OpponentKilled,
    /// Ammunition picked up.
    Reloaded,
    Died,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalRule {
    pub on: TerminalEvent,
    pub reward: f64,
    /// Threshold for `caught`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

/// Per-step and per-event reward constants. Components firing in the same
/// step are summed; any terminal rule that fires ends the episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub step: f64,
    pub wall_collision: f64,
    pub hit_landed: f64,
    pub hit_taken: f64,
    /// Picking up ammunition while holding none.
    pub move_when_empty: f64,
    pub terminals: Vec<TerminalRule>,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        for t in &self.terminals {
            match (t.on, t.distance) {
                (TerminalEvent::Caught, None) => return Err("caught rule needs a distance".into()),
                (TerminalEvent::Caught, Some(d)) if !(d > 0.0) => return Err("caught distance must be positive".into()),
                (e, Some(_)) if e != TerminalEvent::Caught => return Err(format!("{:?} rule takes no distance", e)),
                _ => {}
            }
        }
        Ok(())
    }
}

/// What a reward function may look at for one learner step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Post-step distance to the opponent; `None` once it is dead.
    pub distance: Option<f64>,
    pub in_sight: bool,
    pub wall_collisions: u32,
    pub hits_landed: u32,
    pub hits_taken: u32,
    pub opponent_killed: bool,
    pub died: bool,
    pub pickups: u32,
    /// A pickup happened while the learner held no ammunition.
    pub empty_pickup: bool,
    pub health_before: f64,
    pub health_after: f64,
}

impl Transition {
    pub fn from_events(world: &WorldState, events: &StepEvents, learner: AgentId, opponent: AgentId, health_before: f64) -> Self {
        let e = events.agent(learner);
        Transition {
            distance: events.distance_to_target[learner.index()].filter(|_| world.agent(opponent).is_alive()),
            in_sight: events.in_sight(learner, opponent),
            wall_collisions: e.wall_collisions,
            hits_landed: e.hits_landed.iter().filter(|&&v| v == opponent).count() as u32,
            hits_taken: e.hits_taken,
            opponent_killed: e.kills.contains(&opponent),
            died: e.died,
            pickups: e.ammo_pickups.len() as u32,
            empty_pickup: e.ammo_pickups.iter().any(|p| p.ammo_before == 0),
            health_before,
            health_after: world.agent(learner).health,
        }
    }

    pub fn fires(&self, rule: &TerminalRule) -> bool {
        match rule.on {
            TerminalEvent::Caught => matches!((self.distance, rule.distance), (Some(d), Some(t)) if d < t),
            TerminalEvent::InSight => self.in_sight,
            TerminalEvent::OpponentKilled => self.opponent_killed,
            TerminalEvent::Reloaded => self.pickups > 0,
            TerminalEvent::Died => self.died,
        }
    }
}

/// Reward for one step and whether a terminal rule fired.
pub fn skill_reward(cfg: &RewardConfig, t: &Transition) -> (f64, bool) {
    let mut r = cfg.step;
    let mut add = |n: u32, k: f64| {
        if n > 0 {
            r += k * n as f64;
        }
    };
    add(t.wall_collisions, cfg.wall_collision);
    add(t.hits_landed, cfg.hit_landed);
    add(t.hits_taken, cfg.hit_taken);
    add(t.empty_pickup as u32, cfg.move_when_empty);
    let mut done = false;
    for rule in &cfg.terminals {
        if t.fires(rule) {
            r += rule.reward;
            done = true;
        }
    }
    (r, done)
}
