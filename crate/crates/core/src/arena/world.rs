use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ArenaConfig;
use crate::error::{Error, Result};
use crate::geom::{segment_circle, slew_toward, Rect, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One agent's intent for a single step. Axes are in the agent's
/// target-relative frame: `forward` points at the designated target and
/// `lateral` is its counterclockwise perpendicular.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionCommand {
    pub lateral: f64,
    pub forward: f64,
    pub shoot: bool,
}

impl ActionCommand {
    pub const IDLE: ActionCommand = ActionCommand { lateral: 0.0, forward: 0.0, shoot: false };

    pub fn new(lateral: f64, forward: f64, shoot: bool) -> Self {
        ActionCommand { lateral, forward, shoot }
    }

    pub fn clamped(self) -> Self {
        ActionCommand { lateral: self.lateral.clamp(-1.0, 1.0), forward: self.forward.clamp(-1.0, 1.0), shoot: self.shoot }
    }

    /// Action that moves along the world-frame direction `dir` given the
    /// agent's movement frame axis `forward_axis`.
    pub fn toward(dir: Vec2, forward_axis: Vec2, shoot: bool) -> Self {
        let local = dir.to_frame(forward_axis);
        ActionCommand { lateral: local.y, forward: local.x, shoot }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub team: u8,
    pub position: Vec2,
    pub facing: Vec2,
    pub health: f64,
    pub ammo: u32,
    pub cooldown: u32,
    /// Post-step health for the trailing `health_window` steps, oldest first.
    pub health_history: VecDeque<f64>,
    pub damage_dealt: f64,
    pub target: Option<AgentId>,
    pub speed: f64,
    pub unlimited_ammo: bool,
    pub locked: bool,
}

impl AgentState {
    pub fn is_alive(&self) -> bool {
        self.health > 0.0
    }

    /// Minimum health over the trailing window, including the present.
    pub fn health_history_min(&self) -> f64 {
        self.health_history.iter().copied().fold(self.health, f64::min)
    }

    pub fn can_fire(&self) -> bool {
        self.cooldown == 0 && (self.unlimited_ammo || self.ammo > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projectile {
    pub position: Vec2,
    pub velocity: Vec2,
    pub owner: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmmoStation {
    pub position: Vec2,
    /// Steps until available again; 0 means available.
    pub respawn_timer: u32,
}

impl AmmoStation {
    pub fn is_available(&self) -> bool {
        self.respawn_timer == 0
    }
}

/// Step-invariant constants derived from an [`ArenaConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub dt: f64,
    pub agent_radius: f64,
    pub projectile_speed: f64,
    pub damage: f64,
    pub max_health: f64,
    pub start_ammo: u32,
    pub max_turn_per_step: f64,
    pub cooldown_steps: u32,
    pub ammo_quantum: u32,
    pub station_respawn_steps: u32,
    pub station_radius: f64,
    pub health_window: usize,
}

impl Physics {
    pub fn from_config(c: &ArenaConfig) -> Self {
        Physics {
            dt: c.dt(),
            agent_radius: c.agent_radius,
            projectile_speed: c.projectile_speed,
            damage: c.damage,
            max_health: c.max_health,
            start_ammo: c.start_ammo,
            max_turn_per_step: c.turn_rate_deg.to_radians() * c.dt(),
            cooldown_steps: c.cooldown_steps(),
            ammo_quantum: c.ammo_quantum,
            station_respawn_steps: c.station_respawn_steps,
            station_radius: c.station_radius,
            health_window: c.health_window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pickup {
    pub station: usize,
    pub ammo_before: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentEvents {
    pub wall_collisions: u32,
    pub shots_fired: u32,
    pub hits_landed: Vec<AgentId>,
    pub hits_taken: u32,
    pub kills: Vec<AgentId>,
    pub ammo_pickups: Vec<Pickup>,
    pub died: bool,
}

/// Everything that happened during one call to [`WorldState::step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub agents: Vec<AgentEvents>,
    /// Post-step distance from each agent to its designated target.
    pub distance_to_target: Vec<Option<f64>>,
    in_sight: Vec<bool>,
    n: usize,
}

impl StepEvents {
    fn new(n: usize) -> Self {
        StepEvents { agents: vec![AgentEvents::default(); n], distance_to_target: vec![None; n], in_sight: vec![false; n * n], n }
    }

    /// Post-step line of sight between two live agents.
    pub fn in_sight(&self, a: AgentId, b: AgentId) -> bool {
        self.in_sight[a.index() * self.n + b.index()]
    }

    pub fn agent(&self, id: AgentId) -> &AgentEvents {
        &self.agents[id.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step: u64,
    pub seed: u64,
    pub arena_side: f64,
    pub physics: Physics,
    pub agents: Vec<AgentState>,
    pub projectiles: Vec<Projectile>,
    pub obstacles: Vec<Rect>,
    pub ammo_stations: Vec<AmmoStation>,
    pub rng: ChaCha8Rng,
}

/// Builds the initial world for `(config, seed)`. Identical inputs produce
/// identical worlds.
pub fn spawn_episode(config: &ArenaConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = config.max_spawn_attempts.max(1);
    let mut attempts = 0u32;
    let mut reason = String::from("no attempt made");
    let r = config.agent_radius;

    while attempts < budget {
        attempts += 1;
        let mut obstacles = config.obstacle_rects();
        if let Some(ro) = &config.random_obstacles {
            for _ in 0..ro.count {
                obstacles.push(random_obstacle(&mut rng, config.side, ro));
            }
        }
        let mut stations: Vec<AmmoStation> = config
            .stations
            .iter()
            .map(|s| AmmoStation { position: Vec2::new(s[0], s[1]), respawn_timer: 0 })
            .collect();
        let mut stations_ok = true;
        for _ in 0..config.random_stations {
            match sample_free_point(&mut rng, config, &obstacles, config.station_radius + r, 200) {
                Some(p) => stations.push(AmmoStation { position: p, respawn_timer: 0 }),
                None => {
                    stations_ok = false;
                    break;
                }
            }
        }
        if !stations_ok {
            reason = "no free cell for an ammo station".into();
            continue;
        }

        let mut positions: Vec<Vec2> = Vec::with_capacity(config.agents.len());
        let mut placed_all = true;
        for _ in 0..config.agents.len() {
            let mut placed = None;
            for _ in 0..200 {
                attempts += 1;
                let Some(p) = sample_free_point(&mut rng, config, &obstacles, r + config.spawn.clearance, 1) else {
                    continue;
                };
                let sep_ok = positions.iter().all(|q| {
                    let d = p.distance(*q);
                    d >= config.spawn.min_separation && config.spawn.max_separation.is_none_or(|m| d <= m)
                });
                if sep_ok {
                    placed = Some(p);
                    break;
                }
            }
            match placed {
                Some(p) => positions.push(p),
                None => {
                    placed_all = false;
                    break;
                }
            }
        }
        if !placed_all {
            reason = "agent separation constraints unsatisfied".into();
            continue;
        }
        if config.spawn.require_occluded || config.spawn.require_visible {
            let los = obstacles.iter().all(|o| !o.segment_crosses_interior(positions[0], positions[1]));
            if (config.spawn.require_occluded && los) || (config.spawn.require_visible && !los) {
                reason = "visibility rule unsatisfied".into();
                continue;
            }
        }

        let phys = Physics::from_config(config);
        let mut agents: Vec<AgentState> = config
            .agents
            .iter()
            .zip(&positions)
            .enumerate()
            .map(|(i, (setup, &position))| AgentState {
                id: AgentId(i as u32),
                team: setup.team,
                position,
                facing: Vec2::from_angle(rng.random_range(0.0..std::f64::consts::TAU)),
                health: config.max_health,
                ammo: setup.start_ammo.unwrap_or(config.start_ammo),
                cooldown: 0,
                health_history: VecDeque::with_capacity(config.health_window),
                damage_dealt: 0.0,
                target: None,
                speed: setup.speed.unwrap_or(config.agent_speed),
                unlimited_ammo: setup.unlimited_ammo,
                locked: setup.locked,
            })
            .collect();
        for i in 0..agents.len() {
            agents[i].target = default_target(&agents, i);
        }
        return Ok(WorldState {
            step: 0,
            seed,
            arena_side: config.side,
            physics: phys,
            agents,
            projectiles: Vec::new(),
            obstacles,
            ammo_stations: stations,
            rng,
        });
    }
    Err(Error::SpawnFailed { attempts, reason })
}

/// Builds a world with agents at fixed positions, using only the config's
/// fixed obstacles and stations. Agents initially face their targets.
pub fn place_agents(config: &ArenaConfig, positions: &[Vec2], seed: u64) -> Result<WorldState> {
    config.validate()?;
    if positions.len() != config.agents.len() {
        return Err(Error::InvalidConfig(format!(
            "{} positions for {} configured agents",
            positions.len(),
            config.agents.len()
        )));
    }
    let r = config.agent_radius;
    let obstacles = config.obstacle_rects();
    for p in positions {
        let inside = p.x >= r && p.x <= config.side - r && p.y >= r && p.y <= config.side - r;
        if !inside || obstacles.iter().any(|o| o.inflate(r).contains_open(*p)) {
            return Err(Error::InvalidConfig(format!("agent position {p:?} is not free")));
        }
    }
    let mut agents: Vec<AgentState> = config
        .agents
        .iter()
        .zip(positions)
        .enumerate()
        .map(|(i, (setup, &position))| AgentState {
            id: AgentId(i as u32),
            team: setup.team,
            position,
            facing: Vec2::new(1.0, 0.0),
            health: config.max_health,
            ammo: setup.start_ammo.unwrap_or(config.start_ammo),
            cooldown: 0,
            health_history: VecDeque::with_capacity(config.health_window),
            damage_dealt: 0.0,
            target: None,
            speed: setup.speed.unwrap_or(config.agent_speed),
            unlimited_ammo: setup.unlimited_ammo,
            locked: setup.locked,
        })
        .collect();
    for i in 0..agents.len() {
        agents[i].target = default_target(&agents, i);
        if let Some(t) = agents[i].target {
            if let Some(d) = (agents[t.index()].position - agents[i].position).try_normalize() {
                agents[i].facing = d;
            }
        }
    }
    Ok(WorldState {
        step: 0,
        seed,
        arena_side: config.side,
        physics: Physics::from_config(config),
        agents,
        projectiles: Vec::new(),
        obstacles,
        ammo_stations: config
            .stations
            .iter()
            .map(|s| AmmoStation { position: Vec2::new(s[0], s[1]), respawn_timer: 0 })
            .collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

fn random_obstacle(rng: &mut ChaCha8Rng, side: f64, ro: &super::config::RandomObstacles) -> Rect {
    let long = rng.random_range(ro.min_length..=ro.max_length);
    let (w, h) = match ro.thickness {
        Some(t) => {
            if rng.random_bool(0.5) {
                (long, t)
            } else {
                (t, long)
            }
        }
        None => (long, rng.random_range(ro.min_length..=ro.max_length)),
    };
    let x = rng.random_range(ro.margin..=(side - ro.margin - w).max(ro.margin));
    let y = rng.random_range(ro.margin..=(side - ro.margin - h).max(ro.margin));
    Rect::new(Vec2::new(x, y), Vec2::new(x + w, y + h))
}

fn sample_free_point(rng: &mut ChaCha8Rng, config: &ArenaConfig, obstacles: &[Rect], keep_out: f64, tries: u32) -> Option<Vec2> {
    let lo = keep_out;
    let hi = config.side - keep_out;
    if lo >= hi {
        return None;
    }
    for _ in 0..tries {
        let p = Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
        if obstacles.iter().all(|o| !o.inflate(keep_out).contains_closed(p)) {
            return Some(p);
        }
    }
    None
}

fn default_target(agents: &[AgentState], i: usize) -> Option<AgentId> {
    let me = &agents[i];
    agents.iter().find(|a| a.team != me.team && a.is_alive()).map(|a| a.id)
}

impl WorldState {
    pub fn agent(&self, id: AgentId) -> &AgentState {
        &self.agents[id.index()]
    }

    pub fn agent_mut(&mut self, id: AgentId) -> &mut AgentState {
        &mut self.agents[id.index()]
    }

    pub fn try_agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(id.index())
    }

    /// The live designated target of `id`, if any.
    pub fn target_of(&self, id: AgentId) -> Option<&AgentState> {
        let t = self.agent(id).target?;
        self.try_agent(t).filter(|a| a.is_alive())
    }

    /// Unit vector of `id`'s movement frame: toward its target, or its facing.
    pub fn forward_axis(&self, id: AgentId) -> Vec2 {
        let a = self.agent(id);
        self.target_of(id)
            .and_then(|t| (t.position - a.position).try_normalize())
            .unwrap_or(a.facing)
    }

    pub fn live_agents(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.is_alive())
    }

    pub fn dt(&self) -> f64 {
        self.physics.dt
    }

    /// Advances the world by one fixed timestep.
    pub fn step(&mut self, actions: &[(AgentId, ActionCommand)]) -> Result<StepEvents> {
        let n = self.agents.len();
        let mut cmds: Vec<Option<ActionCommand>> = vec![None; n];
        for &(id, cmd) in actions {
            let slot = cmds.get_mut(id.index()).ok_or(Error::UnknownAgent(id))?;
            if slot.is_some() {
                return Err(Error::DuplicateAction(id));
            }
            if !(cmd.lateral.is_finite() && cmd.forward.is_finite()) {
                return Err(Error::NonFiniteAction(id));
            }
            *slot = Some(cmd.clamped());
        }
        for a in &self.agents {
            if a.is_alive() && cmds[a.id.index()].is_none() {
                return Err(Error::MissingAction(a.id));
            }
        }

        let mut events = StepEvents::new(n);
        let phys = self.physics.clone();

        for a in &mut self.agents {
            a.cooldown = a.cooldown.saturating_sub(1);
        }
        for s in &mut self.ammo_stations {
            s.respawn_timer = s.respawn_timer.saturating_sub(1);
        }

        for i in 0..n {
            if !self.agents[i].is_alive() {
                continue;
            }
            let id = AgentId(i as u32);
            let cmd = cmds[i].unwrap_or(ActionCommand::IDLE);
            let target_dir = self.target_of(id).and_then(|t| (t.position - self.agents[i].position).try_normalize());
            let forward = target_dir.unwrap_or(self.agents[i].facing);

            let agent = &self.agents[i];
            let facing = match target_dir {
                Some(d) => slew_toward(agent.facing, d, phys.max_turn_per_step),
                None => agent.facing,
            };

            let mut position = agent.position;
            if !agent.locked {
                let mut v = forward.perp() * cmd.lateral + forward * cmd.forward;
                let mag = libm::sqrt(cmd.lateral * cmd.lateral + cmd.forward * cmd.forward);
                if mag > 1.0 {
                    v = v * (1.0 / mag);
                }
                let disp = v * (agent.speed * phys.dt);
                let (p, hit_wall) = self.slide(position, disp);
                position = p;
                if hit_wall {
                    events.agents[i].wall_collisions += 1;
                }
            }

            let agent = &mut self.agents[i];
            agent.facing = facing;
            agent.position = position;
            if cmd.shoot && agent.can_fire() {
                self.projectiles.push(Projectile {
                    position: agent.position,
                    velocity: agent.facing * phys.projectile_speed,
                    owner: id,
                });
                if !agent.unlimited_ammo {
                    agent.ammo -= 1;
                }
                agent.cooldown = phys.cooldown_steps;
                events.agents[i].shots_fired += 1;
            }
        }

        self.advance_projectiles(&mut events);
        self.collect_ammo(&mut events);

        for a in &mut self.agents {
            a.health_history.push_back(a.health);
            while a.health_history.len() > phys.health_window {
                a.health_history.pop_front();
            }
        }
        for i in 0..n {
            let needs = match self.agents[i].target {
                Some(t) => !self.agents[t.index()].is_alive(),
                None => true,
            };
            if needs && self.agents[i].is_alive() {
                self.agents[i].target = default_target(&self.agents, i);
            }
        }

        for i in 0..n {
            let id = AgentId(i as u32);
            if self.agents[i].is_alive() {
                events.distance_to_target[i] = self.target_of(id).map(|t| t.position.distance(self.agents[i].position));
            }
            for j in (i + 1)..n {
                let (a, b) = (&self.agents[i], &self.agents[j]);
                let seen = a.is_alive() && b.is_alive() && self.line_of_sight(a.position, b.position);
                events.in_sight[i * n + j] = seen;
                events.in_sight[j * n + i] = seen;
            }
        }

        self.step += 1;
        Ok(events)
    }

    /// Moves a disc center by `disp`, one axis at a time, stopping at walls and
    /// obstacle faces so the remaining component slides along them.
    fn slide(&self, start: Vec2, disp: Vec2) -> (Vec2, bool) {
        let r = self.physics.agent_radius;
        let (lo, hi) = (r, self.arena_side - r);
        let mut p = start;
        let mut hit = false;

        if disp.x != 0.0 {
            let mut nx = p.x + disp.x;
            if nx < lo {
                nx = lo;
                hit = true;
            } else if nx > hi {
                nx = hi;
                hit = true;
            }
            for o in &self.obstacles {
                let e = o.inflate(r);
                if p.y > e.min.y && p.y < e.max.y {
                    if disp.x > 0.0 && p.x <= e.min.x && nx > e.min.x {
                        nx = e.min.x;
                        hit = true;
                    } else if disp.x < 0.0 && p.x >= e.max.x && nx < e.max.x {
                        nx = e.max.x;
                        hit = true;
                    }
                }
            }
            p.x = nx;
        }
        if disp.y != 0.0 {
            let mut ny = p.y + disp.y;
            if ny < lo {
                ny = lo;
                hit = true;
            } else if ny > hi {
                ny = hi;
                hit = true;
            }
            for o in &self.obstacles {
                let e = o.inflate(r);
                if p.x > e.min.x && p.x < e.max.x {
                    if disp.y > 0.0 && p.y <= e.min.y && ny > e.min.y {
                        ny = e.min.y;
                        hit = true;
                    } else if disp.y < 0.0 && p.y >= e.max.y && ny < e.max.y {
                        ny = e.max.y;
                        hit = true;
                    }
                }
            }
            p.y = ny;
        }
        (p, hit)
    }

    fn advance_projectiles(&mut self, events: &mut StepEvents) {
        enum Stop {
            Solid,
            Agent(usize),
        }
        let dt = self.physics.dt;
        let r = self.physics.agent_radius;
        let side = self.arena_side;
        let projectiles = std::mem::take(&mut self.projectiles);
        let mut survivors = Vec::with_capacity(projectiles.len());
        for mut p in projectiles {
            let a = p.position;
            let b = a + p.velocity * dt;
            let mut best: Option<(f64, Stop)> = None;
            let mut consider = |t: f64, s: Stop| {
                if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                    best = Some((t, s));
                }
            };
            for o in &self.obstacles {
                if let Some(t) = o.segment_entry(a, b) {
                    consider(t, Stop::Solid);
                }
            }
            if let Some(t) = exit_parameter(a, b, side) {
                consider(t, Stop::Solid);
            }
            for (j, ag) in self.agents.iter().enumerate() {
                if ag.id == p.owner || !ag.is_alive() {
                    continue;
                }
                if let Some(t) = segment_circle(a, b, ag.position, r) {
                    consider(t, Stop::Agent(j));
                }
            }
            match best {
                None => {
                    p.position = b;
                    survivors.push(p);
                }
                Some((_, Stop::Solid)) => {}
                Some((_, Stop::Agent(j))) => {
                    let owner = p.owner.index();
                    let victim = &mut self.agents[j];
                    victim.health = (victim.health - self.physics.damage).max(0.0);
                    let killed = !victim.is_alive();
                    let victim_id = victim.id;
                    events.agents[j].hits_taken += 1;
                    events.agents[owner].hits_landed.push(victim_id);
                    self.agents[owner].damage_dealt += self.physics.damage;
                    if killed {
                        events.agents[j].died = true;
                        events.agents[owner].kills.push(victim_id);
                    }
                }
            }
        }
        self.projectiles = survivors;
    }

    fn collect_ammo(&mut self, events: &mut StepEvents) {
        let reach = self.physics.agent_radius + self.physics.station_radius;
        for (i, a) in self.agents.iter_mut().enumerate() {
            if !a.is_alive() {
                continue;
            }
            for (s, st) in self.ammo_stations.iter_mut().enumerate() {
                if st.is_available() && a.position.distance(st.position) <= reach {
                    events.agents[i].ammo_pickups.push(Pickup { station: s, ammo_before: a.ammo });
                    a.ammo += self.physics.ammo_quantum;
                    st.respawn_timer = self.physics.station_respawn_steps;
                }
            }
        }
    }

    /// Checks every structural invariant; used by tests and debug assertions.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let r = self.physics.agent_radius;
        for a in &self.agents {
            if !(0.0..=self.physics.max_health).contains(&a.health) {
                return Err(format!("{} health {} out of range", a.id, a.health));
            }
            if (a.facing.length() - 1.0).abs() > 1e-6 {
                return Err(format!("{} facing not unit", a.id));
            }
            let p = a.position;
            if !(p.x >= r && p.x <= self.arena_side - r && p.y >= r && p.y <= self.arena_side - r) {
                return Err(format!("{} outside arena at {:?}", a.id, p));
            }
            if self.obstacles.iter().any(|o| o.inflate(r).contains_open(p)) {
                return Err(format!("{} inside obstacle at {:?}", a.id, p));
            }
        }
        for pr in &self.projectiles {
            if (pr.velocity.length() - self.physics.projectile_speed).abs() > 1e-6 * self.physics.projectile_speed {
                return Err("projectile speed drift".into());
            }
        }
        Ok(())
    }
}

/// Parameter in `[0, 1]` where segment `a -> b` leaves the square `[0, side]^2`,
/// or `None` if `b` is still inside.
fn exit_parameter(a: Vec2, b: Vec2, side: f64) -> Option<f64> {
    let inside = |p: Vec2| p.x >= 0.0 && p.x <= side && p.y >= 0.0 && p.y <= side;
    if inside(b) {
        return None;
    }
    let d = b - a;
    let mut t: f64 = 1.0;
    for (o, dd) in [(a.x, d.x), (a.y, d.y)] {
        if dd > 0.0 {
            t = t.min((side - o) / dd);
        } else if dd < 0.0 {
            t = t.min(-o / dd);
        }
    }
    Some(t.clamp(0.0, 1.0))
}
