//! Fixed-width observation encoders for each skill model.
//!
//! Every vector starts with the core block: 36 rays (distance plus a one-hot
//! over target / obstacle / ammo station), then health, ammunition and the
//! direction to the target. Skill-specific auxiliary blocks follow. Directions
//! are expressed in the agent's facing frame (x along facing, y to its left).

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::arena::{AgentId, CategoryMask, HitKind, WorldState};
use crate::error::{Error, Result};
use crate::geom::Vec2;

pub const RAY_COUNT: usize = 36;
pub const RAY_FEATURES: usize = 4;
pub const RAY_BLOCK_WIDTH: usize = RAY_COUNT * RAY_FEATURES;
pub const CORE_WIDTH: usize = RAY_BLOCK_WIDTH + 4;
pub const HIDE_AUX_WIDTH: usize = 2;
pub const COLLECT_AUX_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub max_ray_range: f64,
    /// Ammunition count mapped to 1.0.
    pub ammo_norm: f64,
    /// Health mapped to 1.0.
    pub health_norm: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig { max_ray_range: 2000.0, ammo_norm: 10.0, health_norm: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    /// Combat, Flee and Advance.
    Core,
    Hide,
    Collect,
    /// Superset of every block.
    Curriculum,
}

impl ObservationKind {
    pub fn width(self) -> usize {
        match self {
            ObservationKind::Core => CORE_WIDTH,
            ObservationKind::Hide => CORE_WIDTH + HIDE_AUX_WIDTH,
            ObservationKind::Collect => CORE_WIDTH + COLLECT_AUX_WIDTH,
            ObservationKind::Curriculum => CORE_WIDTH + HIDE_AUX_WIDTH + COLLECT_AUX_WIDTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RayFeature {
    /// Hit distance over the max ray range; 1.0 when nothing is hit.
    pub distance: f64,
    pub target: bool,
    pub obstacle: bool,
    pub station: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreObservation {
    pub rays: [RayFeature; RAY_COUNT],
    pub health_frac: f64,
    pub ammo_frac: f64,
    pub dir_to_target: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HideAux {
    pub player_sees_agent: bool,
    pub frac_dist_to_block: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectAux {
    pub dir_to_ammo: Vec2,
    pub dist_to_ammo: f64,
}

fn ray_rotations() -> &'static [(f64, f64); RAY_COUNT] {
    static TABLE: OnceLock<[(f64, f64); RAY_COUNT]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [(0.0, 0.0); RAY_COUNT];
        for (i, e) in t.iter_mut().enumerate() {
            let a = (i as f64 * 10.0).to_radians();
            *e = (libm::cos(a), libm::sin(a));
        }
        t
    })
}

/// Direction of ray `i` for an agent facing `facing` (ray 0 along facing,
/// counterclockwise in 10 degree steps).
pub fn ray_direction(facing: Vec2, i: usize) -> Vec2 {
    let (c, s) = ray_rotations()[i];
    Vec2::new(c * facing.x - s * facing.y, s * facing.x + c * facing.y)
}

fn live_agent(world: &WorldState, id: AgentId) -> Result<()> {
    match world.try_agent(id) {
        None => Err(Error::UnknownAgent(id)),
        Some(a) if !a.is_alive() => Err(Error::AgentDead(id)),
        Some(_) => Ok(()),
    }
}

pub fn encode_core(world: &WorldState, id: AgentId, cfg: &SensorConfig) -> Result<CoreObservation> {
    live_agent(world, id)?;
    let agent = world.agent(id);
    let target = world.target_of(id).ok_or(Error::MissingTarget(id))?;
    let mut rays = [RayFeature::default(); RAY_COUNT];
    for (i, ray) in rays.iter_mut().enumerate() {
        let dir = ray_direction(agent.facing, i);
        *ray = match world.raycast_ignoring(agent.position, dir, cfg.max_ray_range, CategoryMask::ALL, Some(id)) {
            None => RayFeature { distance: 1.0, ..Default::default() },
            Some(hit) => RayFeature {
                distance: (hit.distance / cfg.max_ray_range).clamp(0.0, 1.0),
                target: matches!(hit.kind, HitKind::Agent(_)),
                obstacle: matches!(hit.kind, HitKind::Obstacle(_) | HitKind::Wall),
                station: matches!(hit.kind, HitKind::Station(_)),
            },
        };
    }
    let dir_to_target = (target.position - agent.position)
        .try_normalize()
        .map(|d| d.to_frame(agent.facing))
        .unwrap_or(Vec2::new(1.0, 0.0));
    Ok(CoreObservation {
        rays,
        health_frac: (agent.health / cfg.health_norm).clamp(0.0, 1.0),
        ammo_frac: (agent.ammo as f64 / cfg.ammo_norm).clamp(0.0, 1.0),
        dir_to_target,
    })
}

/// Whether the target ("player") sees the agent, and how far toward the player
/// the first blocking object sits, as a fraction of the distance to the player.
pub fn encode_hide_aux(world: &WorldState, id: AgentId) -> Result<HideAux> {
    live_agent(world, id)?;
    let agent = world.agent(id);
    let player = world.target_of(id).ok_or(Error::MissingTarget(id))?;
    let dist = agent.position.distance(player.position);
    let Some(dir) = (player.position - agent.position).try_normalize() else {
        return Ok(HideAux { player_sees_agent: true, frac_dist_to_block: 1.0 });
    };
    let player_sees_agent = world.line_of_sight(player.position, agent.position);
    let frac = world
        .raycast(agent.position, dir, dist, CategoryMask::OBSTACLE)
        .map_or(1.0, |h| (h.distance / dist).clamp(0.0, 1.0));
    Ok(HideAux { player_sees_agent, frac_dist_to_block: frac })
}

/// Direction and normalized distance to the nearest available ammo station.
pub fn encode_collect_aux(world: &WorldState, id: AgentId) -> Result<CollectAux> {
    live_agent(world, id)?;
    let agent = world.agent(id);
    let nearest = nearest_station(world, agent.position);
    Ok(match nearest {
        None => CollectAux { dir_to_ammo: Vec2::ZERO, dist_to_ammo: 1.0 },
        Some(i) => {
            let delta = world.ammo_stations[i].position - agent.position;
            let diag = world.arena_side * std::f64::consts::SQRT_2;
            CollectAux {
                dir_to_ammo: delta.try_normalize().map_or(Vec2::ZERO, |d| d.to_frame(agent.facing)),
                dist_to_ammo: (delta.length() / diag).clamp(0.0, 1.0),
            }
        }
    })
}

/// Index of the nearest available station (lowest index on ties).
pub fn nearest_station(world: &WorldState, from: Vec2) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in world.ammo_stations.iter().enumerate() {
        if !s.is_available() {
            continue;
        }
        let d = from.distance(s.position);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

impl CoreObservation {
    pub fn write(&self, out: &mut Vec<f32>) {
        for r in &self.rays {
            out.extend_from_slice(&[r.distance as f32, r.target as u8 as f32, r.obstacle as u8 as f32, r.station as u8 as f32]);
        }
        out.extend_from_slice(&[
            self.health_frac as f32,
            self.ammo_frac as f32,
            self.dir_to_target.x as f32,
            self.dir_to_target.y as f32,
        ]);
    }
}

impl HideAux {
    pub fn write(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&[self.player_sees_agent as u8 as f32, self.frac_dist_to_block as f32]);
    }
}

impl CollectAux {
    pub fn write(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&[self.dir_to_ammo.x as f32, self.dir_to_ammo.y as f32, self.dist_to_ammo as f32]);
    }
}

/// Appends the flat observation of `kind` for agent `id` to `out`.
pub fn encode(kind: ObservationKind, world: &WorldState, id: AgentId, cfg: &SensorConfig, out: &mut Vec<f32>) -> Result<()> {
    let start = out.len();
    encode_core(world, id, cfg)?.write(out);
    if matches!(kind, ObservationKind::Hide | ObservationKind::Curriculum) {
        encode_hide_aux(world, id)?.write(out);
    }
    if matches!(kind, ObservationKind::Collect | ObservationKind::Curriculum) {
        encode_collect_aux(world, id)?.write(out);
    }
    debug_assert_eq!(out.len() - start, kind.width());
    Ok(())
}

pub fn encode_vec(kind: ObservationKind, world: &WorldState, id: AgentId, cfg: &SensorConfig) -> Result<Vec<f32>> {
    let mut v = Vec::with_capacity(kind.width());
    encode(kind, world, id, cfg, &mut v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub description: String,
}

/// Field layout of an observation vector, for interpreting saved models.
pub fn schema(kind: ObservationKind) -> Vec<SchemaField> {
    let mut fields = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, width: usize, description: &str| {
        fields.push(SchemaField { name, offset, width, description: description.to_string() });
        offset += width;
    };
    for i in 0..RAY_COUNT {
        push(
            format!("ray{:02}", i),
            RAY_FEATURES,
            &format!("ray at {} deg ccw from facing: distance/max_range, is_target, is_obstacle, is_station", i * 10),
        );
    }
    push("health_frac".into(), 1, "health / health_norm");
    push("ammo_frac".into(), 1, "ammo / ammo_norm, clamped to 1");
    push("dir_to_target".into(), 2, "unit direction to target in facing frame");
    if matches!(kind, ObservationKind::Hide | ObservationKind::Curriculum) {
        push("player_sees_agent".into(), 1, "1 when the target has line of sight to the agent");
        push("frac_dist_to_block".into(), 1, "first obstacle toward the target / distance to target");
    }
    if matches!(kind, ObservationKind::Collect | ObservationKind::Curriculum) {
        push("dir_to_ammo".into(), 2, "unit direction to nearest available station in facing frame");
        push("dist_to_ammo".into(), 1, "distance to nearest available station / arena diagonal");
    }
    fields
}
