use serde::{Deserialize, Serialize};

use super::world::{AgentId, WorldState};
use crate::geom::{ray_circle, Vec2};

/// Set of hit categories a ray may report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryMask(u8);

impl CategoryMask {
    pub const AGENT: CategoryMask = CategoryMask(1);
    /// Arena walls and static obstacles.
    pub const OBSTACLE: CategoryMask = CategoryMask(2);
    pub const STATION: CategoryMask = CategoryMask(4);
    pub const ALL: CategoryMask = CategoryMask(7);
    pub const NONE: CategoryMask = CategoryMask(0);

    pub fn contains(self, other: CategoryMask) -> bool {
        self.0 & other.0 == other.0
    }
}

impl std::ops::BitOr for CategoryMask {
    type Output = CategoryMask;
    fn bitor(self, o: CategoryMask) -> CategoryMask {
        CategoryMask(self.0 | o.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitKind {
    Agent(AgentId),
    /// A static obstacle (by index).
    Obstacle(usize),
    Wall,
    Station(usize),
}

impl HitKind {
    pub fn category(self) -> CategoryMask {
        match self {
            HitKind::Agent(_) => CategoryMask::AGENT,
            HitKind::Obstacle(_) | HitKind::Wall => CategoryMask::OBSTACLE,
            HitKind::Station(_) => CategoryMask::STATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub distance: f64,
    pub kind: HitKind,
}

impl WorldState {
    /// Nearest intersection along a unit ray among the masked categories.
    ///
    /// Live agent discs, available ammo stations, obstacles and arena walls are
    /// candidates. A ray starting inside a shape hits it at distance 0.
    pub fn raycast(&self, origin: Vec2, dir: Vec2, max_dist: f64, mask: CategoryMask) -> Option<RayHit> {
        self.raycast_ignoring(origin, dir, max_dist, mask, None)
    }

    /// As [`raycast`](Self::raycast), skipping one agent's own disc.
    pub fn raycast_ignoring(
        &self,
        origin: Vec2,
        dir: Vec2,
        max_dist: f64,
        mask: CategoryMask,
        ignore: Option<AgentId>,
    ) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        let mut consider = |distance: f64, kind: HitKind| {
            if distance <= max_dist && best.is_none_or(|b| distance < b.distance) {
                best = Some(RayHit { distance, kind });
            }
        };
        if mask.contains(CategoryMask::OBSTACLE) {
            for (i, o) in self.obstacles.iter().enumerate() {
                if let Some(t) = o.ray_hit(origin, dir, max_dist) {
                    consider(t, HitKind::Obstacle(i));
                }
            }
            if let Some(t) = wall_distance(origin, dir, self.arena_side) {
                consider(t, HitKind::Wall);
            }
        }
        if mask.contains(CategoryMask::AGENT) {
            let r = self.physics.agent_radius;
            for a in self.agents.iter().filter(|a| a.is_alive() && Some(a.id) != ignore) {
                if let Some(t) = ray_circle(origin, dir, a.position, r, max_dist) {
                    consider(t, HitKind::Agent(a.id));
                }
            }
        }
        if mask.contains(CategoryMask::STATION) {
            let r = self.physics.station_radius;
            for (i, s) in self.ammo_stations.iter().enumerate().filter(|(_, s)| s.is_available()) {
                if let Some(t) = ray_circle(origin, dir, s.position, r, max_dist) {
                    consider(t, HitKind::Station(i));
                }
            }
        }
        best
    }

    /// True iff the open segment `a -> b` crosses no obstacle interior.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        if a == b {
            return true;
        }
        self.obstacles.iter().all(|o| !o.segment_crosses_interior(a, b))
    }
}

/// Distance along a unit ray to the boundary of `[0, side]^2` (0 when outside).
fn wall_distance(origin: Vec2, dir: Vec2, side: f64) -> Option<f64> {
    let inside = origin.x >= 0.0 && origin.x <= side && origin.y >= 0.0 && origin.y <= side;
    if !inside {
        return Some(0.0);
    }
    let mut t = f64::INFINITY;
    for (o, d) in [(origin.x, dir.x), (origin.y, dir.y)] {
        if d > 0.0 {
            t = t.min((side - o) / d);
        } else if d < 0.0 {
            t = t.min(-o / d);
        }
    }
    t.is_finite().then_some(t)
}
