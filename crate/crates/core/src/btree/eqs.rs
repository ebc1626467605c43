//! Environment query: sample candidate points around an agent, score them and
//! pick the best one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nav::NavGrid;
use crate::arena::{AgentId, WorldState};
use crate::geom::Vec2;

pub const RING_DIRECTIONS: usize = 32;
pub const RING_RADII: [f64; 3] = [400.0, 800.0, 1200.0];
/// Agent position plus the three rings.
pub const DEFAULT_SAMPLES: usize = 1 + RING_DIRECTIONS * RING_RADII.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqsTerm {
    /// Distance from the candidate to the player.
    DistanceToPlayer,
    /// How far inside `range` of the nearest wall or obstacle the candidate is.
    WallProximity { range: f64 },
    /// 1 when the player has no line of sight to the candidate.
    Occluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqsCriteria {
    pub terms: Vec<(f64, EqsTerm)>,
}

impl EqsCriteria {
    pub fn flee() -> Self {
        EqsCriteria {
            terms: vec![(1.0, EqsTerm::DistanceToPlayer), (-2.0, EqsTerm::WallProximity { range: 300.0 })],
        }
    }

    pub fn hide() -> Self {
        EqsCriteria { terms: vec![(1.0e4, EqsTerm::Occluded), (1.0, EqsTerm::DistanceToPlayer)] }
    }

    pub fn scaled(&self, k: f64) -> Self {
        EqsCriteria { terms: self.terms.iter().map(|&(w, t)| (w * k, t)).collect() }
    }
}

/// Candidate points in a fixed order: the agent position first, then rings of
/// 32 directions at radii 400, 800, 1200 (repeating with a half-step offset if
/// more samples are requested). Ring angles carry a small jitter derived from
/// the world seed, step and agent so repeated queries do not all coincide.
pub fn candidates(world: &WorldState, id: AgentId, n_samples: usize) -> Vec<Vec2> {
    let origin = world.agent(id).position;
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed ^ world.step.rotate_left(20) ^ ((id.0 as u64) << 56) ^ 0x45_51_53);
    let step = std::f64::consts::TAU / RING_DIRECTIONS as f64;
    let jitter = rng.random_range(-0.25..0.25) * step;
    let mut out = Vec::with_capacity(n_samples);
    out.push(origin);
    let mut i = 0;
    while out.len() < n_samples {
        let ring = i / RING_DIRECTIONS;
        let radius = RING_RADII[ring % RING_RADII.len()];
        let offset = if (ring / RING_RADII.len()) % 2 == 1 { 0.5 * step } else { 0.0 };
        let angle = (i % RING_DIRECTIONS) as f64 * step + jitter + offset;
        out.push(origin + Vec2::from_angle(angle) * radius);
        i += 1;
    }
    out.truncate(n_samples);
    out
}

fn wall_clearance(world: &WorldState, p: Vec2) -> f64 {
    let s = world.arena_side;
    let mut d = p.x.min(p.y).min(s - p.x).min(s - p.y);
    for o in &world.obstacles {
        d = d.min(o.distance_to(p));
    }
    d
}

pub fn score(world: &WorldState, player: Vec2, p: Vec2, criteria: &EqsCriteria) -> f64 {
    criteria
        .terms
        .iter()
        .map(|&(w, term)| {
            w * match term {
                EqsTerm::DistanceToPlayer => p.distance(player),
                EqsTerm::WallProximity { range } => (range - wall_clearance(world, p)).max(0.0),
                EqsTerm::Occluded => (!world.line_of_sight(player, p)) as u8 as f64,
            }
        })
        .sum()
}

/// Best valid candidate under `criteria` (ties within 1e-9 of the best score,
/// relative to the largest score magnitude, go to the lowest index). Falls back
/// to the agent's position when no candidate is valid or there is no player.
pub fn eqs_query(world: &WorldState, id: AgentId, criteria: &EqsCriteria, n_samples: usize) -> Vec2 {
    eqs_query_with(world, &NavGrid::new(world), id, criteria, n_samples)
}

pub fn eqs_query_with(world: &WorldState, grid: &NavGrid, id: AgentId, criteria: &EqsCriteria, n_samples: usize) -> Vec2 {
    let origin = world.agent(id).position;
    let Some(player) = world.target_of(id).map(|t| t.position) else {
        return origin;
    };
    let pts = candidates(world, id, n_samples.max(1));
    let scored: Vec<(Vec2, f64)> = pts
        .into_iter()
        .filter(|&p| grid.point_free(p) || p == origin)
        .map(|p| (p, score(world, player, p, criteria)))
        .collect();
    pick_best(&scored).unwrap_or(origin)
}

fn pick_best(scored: &[(Vec2, f64)]) -> Option<Vec2> {
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let scale = scored.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    scored.iter().find(|s| s.1 >= best - tol).map(|s| s.0)
}
