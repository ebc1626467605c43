//! Occupancy-grid path planning for scripted movement.

use pathfinding::prelude::astar;

use crate::arena::WorldState;
use crate::geom::{Rect, Vec2};

pub const CELL_SIZE: f64 = 100.0;
/// Extra clearance kept by planned routes beyond the agent radius, so waypoints
/// never sit exactly on an obstacle corner.
pub const PLAN_MARGIN: f64 = 15.0;
const AXIAL_COST: u32 = 1000;
const DIAGONAL_COST: u32 = 1414;

pub type Cell = (i32, i32);

/// Free/blocked cells for the centre of an agent disc (cells keep the
/// planning margin).
#[derive(Debug, Clone)]
pub struct NavGrid {
    pub cell: f64,
    pub nx: i32,
    pub ny: i32,
    side: f64,
    radius: f64,
    inflated: Vec<Rect>,
    padded: Vec<Rect>,
    blocked: Vec<bool>,
}

impl NavGrid {
    pub fn new(world: &WorldState) -> NavGrid {
        Self::with_cell(world, CELL_SIZE)
    }

    pub fn with_cell(world: &WorldState, cell: f64) -> NavGrid {
        let radius = world.physics.agent_radius;
        let side = world.arena_side;
        let inflated: Vec<Rect> = world.obstacles.iter().map(|o| o.inflate(radius)).collect();
        let padded: Vec<Rect> = world.obstacles.iter().map(|o| o.inflate(radius + PLAN_MARGIN)).collect();
        let n = (side / cell).ceil() as i32;
        let mut g = NavGrid { cell, nx: n, ny: n, side, radius, inflated, padded, blocked: vec![false; (n * n) as usize] };
        for y in 0..n {
            for x in 0..n {
                let free = g.point_clear(g.center((x, y)));
                g.blocked[(y * n + x) as usize] = !free;
            }
        }
        g
    }

    pub fn center(&self, c: Cell) -> Vec2 {
        Vec2::new((c.0 as f64 + 0.5) * self.cell, (c.1 as f64 + 0.5) * self.cell)
    }

    pub fn cell_of(&self, p: Vec2) -> Cell {
        let f = |v: f64, n: i32| ((v / self.cell).floor() as i32).clamp(0, n - 1);
        (f(p.x, self.nx), f(p.y, self.ny))
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.nx && c.1 < self.ny
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[(c.1 * self.nx + c.0) as usize]
    }

    /// Whether an agent centred at `p` would be clear of walls and obstacles.
    pub fn point_free(&self, p: Vec2) -> bool {
        let (lo, hi) = (self.radius, self.side - self.radius);
        p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi && self.inflated.iter().all(|r| !r.contains_open(p))
    }

    /// As [`point_free`](Self::point_free) with the planning margin added.
    pub fn point_clear(&self, p: Vec2) -> bool {
        let (lo, hi) = (self.radius, self.side - self.radius);
        p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi && self.padded.iter().all(|r| !r.contains_open(p))
    }

    /// Whether an agent centre can travel straight from `a` to `b`.
    pub fn segment_free(&self, a: Vec2, b: Vec2) -> bool {
        self.point_free(a) && self.point_free(b) && self.inflated.iter().all(|r| !r.segment_crosses_interior(a, b))
    }

    /// Whether the straight move keeps the planning margin from every obstacle.
    pub fn segment_clear(&self, a: Vec2, b: Vec2) -> bool {
        self.point_free(a) && self.point_free(b) && self.padded.iter().all(|r| !r.segment_crosses_interior(a, b))
    }

    /// 8-connected neighbours; diagonal moves may not cut a blocked corner.
    pub fn neighbours(&self, c: Cell) -> impl Iterator<Item = (Cell, u32)> + '_ {
        const DIRS: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        DIRS.iter().filter_map(move |&(dx, dy)| {
            let n = (c.0 + dx, c.1 + dy);
            if !self.is_free(n) {
                return None;
            }
            if dx != 0 && dy != 0 {
                if !self.is_free((c.0 + dx, c.1)) || !self.is_free((c.0, c.1 + dy)) {
                    return None;
                }
                Some((n, DIAGONAL_COST))
            } else {
                Some((n, AXIAL_COST))
            }
        })
    }

    /// Shortest cell path and its cost (1000 per axial step, 1414 per diagonal).
    pub fn shortest(&self, from: Cell, to: Cell) -> Option<(Vec<Cell>, u32)> {
        if !self.is_free(from) || !self.is_free(to) {
            return None;
        }
        astar(
            &from,
            |&c| self.neighbours(c).collect::<Vec<_>>(),
            |&c| {
                let dx = (c.0 - to.0).unsigned_abs();
                let dy = (c.1 - to.1).unsigned_abs();
                AXIAL_COST * dx.max(dy) + (DIAGONAL_COST - AXIAL_COST) * dx.min(dy)
            },
            |&c| c == to,
        )
    }

    /// Free cell nearest to `p` (by centre distance) within a few rings.
    pub fn nearest_free_cell(&self, p: Vec2) -> Option<Cell> {
        let c0 = self.cell_of(p);
        if self.is_free(c0) {
            return Some(c0);
        }
        for ring in 1i32..=3 {
            let mut best: Option<(Cell, f64)> = None;
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let c = (c0.0 + dx, c0.1 + dy);
                    if self.is_free(c) && self.segment_free(p, self.center(c)) {
                        let d = self.center(c).distance(p);
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((c, d));
                        }
                    }
                }
            }
            if let Some((c, _)) = best {
                return Some(c);
            }
        }
        None
    }

    /// Waypoints from `from` to `to`: the straight segment when it is clear,
    /// else the string-pulled grid path. Empty when `to` is unreachable.
    pub fn plan(&self, from: Vec2, to: Vec2) -> Vec<Vec2> {
        if !self.point_free(to) {
            return vec![];
        }
        if self.segment_clear(from, to) {
            return vec![from, to];
        }
        let (Some(start), Some(goal)) = (self.nearest_free_cell(from), self.nearest_free_cell(to)) else {
            return vec![];
        };
        let Some((cells, _)) = self.shortest(start, goal) else {
            return vec![];
        };
        let mut raw = Vec::with_capacity(cells.len() + 2);
        raw.push(from);
        raw.extend(cells.iter().map(|&c| self.center(c)));
        raw.push(to);
        self.string_pull(&raw)
    }

    fn string_pull(&self, raw: &[Vec2]) -> Vec<Vec2> {
        let mut out = vec![raw[0]];
        let mut i = 0;
        while i + 1 < raw.len() {
            let mut j = raw.len() - 1;
            while j > i + 1 && !self.segment_clear(raw[i], raw[j]) {
                j -= 1;
            }
            out.push(raw[j]);
            i = j;
        }
        out
    }
}

pub fn plan_path(world: &WorldState, from: Vec2, to: Vec2) -> Vec<Vec2> {
    NavGrid::new(world).plan(from, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{place_agents, ArenaConfig};
    use std::collections::HashMap;

    fn world(obstacles: Vec<[f64; 4]>) -> WorldState {
        let cfg = ArenaConfig { side: 2000.0, obstacles, stations: vec![], ..ArenaConfig::default() };
        place_agents(&cfg, &[Vec2::new(150.0, 150.0), Vec2::new(1850.0, 1850.0)], 0).unwrap()
    }

    /// Exhaustive Bellman-Ford style relaxation over every free cell.
    fn oracle_cost(g: &NavGrid, from: Cell, to: Cell) -> Option<u32> {
        let mut dist: HashMap<Cell, u32> = HashMap::new();
        dist.insert(from, 0);
        loop {
            let mut changed = false;
            for y in 0..g.ny {
                for x in 0..g.nx {
                    let Some(&d) = dist.get(&(x, y)) else { continue };
                    for (n, c) in g.neighbours((x, y)) {
                        let nd = d + c;
                        if dist.get(&n).is_none_or(|&old| nd < old) {
                            dist.insert(n, nd);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist.get(&to).copied()
    }

    #[test]
    fn open_map_is_straight() {
        let w = world(vec![]);
        let p = plan_path(&w, Vec2::new(200.0, 200.0), Vec2::new(1700.0, 900.0));
        assert_eq!(p, vec![Vec2::new(200.0, 200.0), Vec2::new(1700.0, 900.0)]);
    }

    #[test]
    fn goal_inside_obstacle_is_unreachable() {
        let w = world(vec![[900.0, 900.0, 1100.0, 1100.0]]);
        assert!(plan_path(&w, Vec2::new(200.0, 200.0), Vec2::new(1000.0, 1000.0)).is_empty());
    }

    #[test]
    fn routes_through_wall_gap() {
        // Vertical wall at x in [950, 1050] with a gap for y in [1300, 1700].
        let w = world(vec![[950.0, 0.0, 1050.0, 1300.0], [950.0, 1700.0, 1050.0, 2000.0]]);
        let g = NavGrid::new(&w);
        let from = Vec2::new(300.0, 300.0);
        let to = Vec2::new(1700.0, 300.0);
        let path = g.plan(from, to);
        assert!(path.len() > 2);
        assert!(path.windows(2).all(|s| g.segment_free(s[0], s[1])));
        assert!(path.iter().any(|p| p.y > 1300.0 && p.y < 1700.0 && (p.x - 1000.0).abs() < 200.0));
        let (a, b) = (g.cell_of(from), g.cell_of(to));
        let (_, cost) = g.shortest(a, b).unwrap();
        assert_eq!(Some(cost), oracle_cost(&g, a, b));
    }

    #[test]
    fn astar_matches_exhaustive_search_on_random_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let obstacles = (0..6)
                .map(|_| {
                    let x = rng.random_range(100.0..1700.0);
                    let y = rng.random_range(100.0..1700.0);
                    [x, y, x + rng.random_range(30.0..300.0), y + rng.random_range(30.0..300.0)]
                })
                .collect();
            let mut cfg = ArenaConfig { side: 2000.0, obstacles, stations: vec![], ..ArenaConfig::default() };
            cfg.spawn.clearance = 0.0;
            let w = crate::arena::spawn_episode(&cfg, rng.random()).unwrap();
            let g = NavGrid::new(&w);
            for _ in 0..5 {
                let a = (rng.random_range(0..g.nx), rng.random_range(0..g.ny));
                let b = (rng.random_range(0..g.nx), rng.random_range(0..g.ny));
                let got = g.shortest(a, b).map(|(_, c)| c);
                let want = if g.is_free(a) && g.is_free(b) { oracle_cost(&g, a, b) } else { None };
                assert_eq!(got, want);
            }
        }
    }
}
