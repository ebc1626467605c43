use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};

/// Physical constants and layout of one arena, loadable from TOML.
///
/// Rectangles are written `[x0, y0, x1, y1]` and points `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub side: f64,
    /// Simulation steps per second.
    pub tick_rate: u32,
    pub agent_radius: f64,
    pub agent_speed: f64,
    pub projectile_speed: f64,
    pub damage: f64,
    pub max_health: f64,
    pub start_ammo: u32,
    /// Minimum seconds between shots.
    pub fire_interval: f64,
    pub turn_rate_deg: f64,
    pub ammo_quantum: u32,
    pub station_respawn_steps: u32,
    pub station_radius: f64,
    /// Trailing window (steps) for the minimum-health record.
    pub health_window: usize,
    pub max_spawn_attempts: u32,
    pub obstacles: Vec<[f64; 4]>,
    pub random_obstacles: Option<RandomObstacles>,
    pub stations: Vec<[f64; 2]>,
    pub random_stations: u32,
    pub agents: Vec<AgentSetup>,
    pub spawn: SpawnRules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomObstacles {
    pub count: u32,
    pub min_length: f64,
    pub max_length: f64,
    /// Fixed short side; `None` draws square-ish blocks between the length bounds.
    pub thickness: Option<f64>,
    /// Keep-out distance from the arena walls.
    pub margin: f64,
}

impl Default for RandomObstacles {
    fn default() -> Self {
        RandomObstacles { count: 0, min_length: 100.0, max_length: 300.0, thickness: None, margin: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSetup {
    pub team: u8,
    pub speed: Option<f64>,
    pub unlimited_ammo: bool,
    /// Position is frozen; facing still turns toward the target.
    pub locked: bool,
    pub start_ammo: Option<u32>,
}

impl Default for AgentSetup {
    fn default() -> Self {
        AgentSetup { team: 0, speed: None, unlimited_ammo: false, locked: false, start_ammo: None }
    }
}

impl AgentSetup {
    pub fn team(team: u8) -> Self {
        AgentSetup { team, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnRules {
    /// Minimum pairwise distance between agents.
    pub min_separation: f64,
    pub max_separation: Option<f64>,
    /// Agents 0 and 1 must not see each other at spawn.
    pub require_occluded: bool,
    /// Agents 0 and 1 must see each other at spawn.
    pub require_visible: bool,
    /// Minimum gap between an agent disc and any obstacle or wall.
    pub clearance: f64,
}

impl Default for SpawnRules {
    fn default() -> Self {
        SpawnRules {
            min_separation: 0.0,
            max_separation: None,
            require_occluded: false,
            require_visible: false,
            clearance: 10.0,
        }
    }
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            side: 4000.0,
            tick_rate: 30,
            agent_radius: 50.0,
            agent_speed: 600.0,
            projectile_speed: 2000.0,
            damage: 10.0,
            max_health: 100.0,
            start_ammo: 10,
            fire_interval: 0.15,
            turn_rate_deg: 180.0,
            ammo_quantum: 10,
            station_respawn_steps: 300,
            station_radius: 40.0,
            health_window: 90,
            max_spawn_attempts: 10_000,
            obstacles: Vec::new(),
            random_obstacles: None,
            stations: Vec::new(),
            random_stations: 0,
            agents: vec![AgentSetup::team(0), AgentSetup::team(1)],
            spawn: SpawnRules::default(),
        }
    }
}

pub(crate) const EVAL_ARENA: &str = include_str!("../../../../configs/arena/eval.toml");
pub(crate) const DESK_ARENA: &str = include_str!("../../../../configs/arena/desk.toml");

impl ArenaConfig {
    /// The fixed evaluation arena: 4000 u square, static obstacles, 8 stations.
    pub fn evaluation() -> Self {
        Self::from_toml_str(EVAL_ARENA).expect("bundled evaluation arena parses")
    }

    /// The 1000 u arena used for desk-scale training and evaluation.
    pub fn desk() -> Self {
        Self::from_toml_str(DESK_ARENA).expect("bundled desk arena parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ArenaConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("arena config serializes")
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate as f64
    }

    /// Shot cooldown in whole steps, rounded up so the interval is never shortened.
    pub fn cooldown_steps(&self) -> u32 {
        let raw = self.fire_interval * self.tick_rate as f64;
        (raw - 1e-9).ceil().max(0.0) as u32
    }

    pub fn obstacle_rects(&self) -> Vec<Rect> {
        self.obstacles
            .iter()
            .map(|r| Rect::new(Vec2::new(r[0], r[1]), Vec2::new(r[2], r[3])))
            .collect()
    }

    pub fn diagonal(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.side.is_finite() && self.side > 0.0) {
            return bad("side must be positive");
        }
        if self.tick_rate == 0 {
            return bad("tick_rate must be positive");
        }
        if !(self.agent_radius > 0.0 && 2.0 * self.agent_radius < self.side) {
            return bad("agent_radius must be positive and fit in the arena");
        }
        for (name, v) in [
            ("agent_speed", self.agent_speed),
            ("projectile_speed", self.projectile_speed),
            ("max_health", self.max_health),
            ("turn_rate_deg", self.turn_rate_deg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.damage.is_finite() && self.damage >= 0.0) || !(self.fire_interval >= 0.0) {
            return bad("damage and fire_interval must be non-negative");
        }
        for r in self.obstacle_rects() {
            if !r.is_valid() {
                return bad("obstacle min must be below max componentwise");
            }
            if r.min.x < 0.0 || r.min.y < 0.0 || r.max.x > self.side || r.max.y > self.side {
                return bad("obstacle outside arena");
            }
        }
        for s in &self.stations {
            if !(s[0] >= 0.0 && s[1] >= 0.0 && s[0] <= self.side && s[1] <= self.side) {
                return bad("ammo station outside arena");
            }
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required");
        }
        if self.spawn.require_occluded && self.spawn.require_visible {
            return bad("spawn cannot require both occlusion and visibility");
        }
        if (self.spawn.require_occluded || self.spawn.require_visible) && self.agents.len() < 2 {
            return bad("visibility spawn rules need two agents");
        }
        if let Some(ro) = &self.random_obstacles {
            if !(ro.min_length > 0.0 && ro.min_length <= ro.max_length) {
                return bad("random obstacle lengths must satisfy 0 < min <= max");
            }
            if ro.max_length + 2.0 * ro.margin >= self.side {
                return bad("random obstacles do not fit inside the arena");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cooldown_rounds_up_to_five_steps() {
        assert_eq!(ArenaConfig::default().cooldown_steps(), 5);
    }

    #[test]
    fn bundled_arenas_validate() {
        let eval = ArenaConfig::evaluation();
        assert_eq!(eval.side, 4000.0);
        assert_eq!(eval.stations.len(), 8);
        assert!(!eval.obstacles.is_empty());
        assert_eq!(ArenaConfig::desk().side, 1000.0);
    }

    #[test]
    fn rejects_obstacle_outside_arena() {
        let mut c = ArenaConfig::default();
        c.obstacles.push([3900.0, 0.0, 4100.0, 10.0]);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = ArenaConfig::evaluation();
        let back = ArenaConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }
}
