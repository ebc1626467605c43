//! Head-to-head matches and aggregated evaluation reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agents::AgentSpec;
use crate::arena::{spawn_episode, ActionCommand, AgentId, ArenaConfig, TraceHasher, WorldState};
use crate::btree::TickTrace;
use crate::error::{Error, Result};
use crate::ppo::mix_seed;

/// Matches running this many steps are abandoned and restarted.
pub const MAX_MATCH_STEPS: u64 = 10_000;
/// Fresh seeds tried per evaluation episode before it is left unresolved.
pub const MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub seed: u64,
    /// 0 for the first agent, 1 for the second; `None` on timeout.
    pub winner: Option<usize>,
    pub steps: u64,
    /// Damage each agent dealt, capped at the opponent's full health.
    pub damage_dealt: [f64; 2],
    pub hits: [u32; 2],
    /// Hit the step limit without a death.
    pub restarted: bool,
    /// Digest over every world state of the match.
    pub trace_hash: String,
}

/// What the match loop shows an observer before each step.
pub struct StepView<'a> {
    pub world: &'a WorldState,
    pub actions: &'a [(AgentId, ActionCommand)],
    pub traces: [Option<&'a TickTrace>; 2],
}

/// Arena for a match between `a` (team 0) and `b` (team 1).
pub fn match_arena(base: &ArenaConfig, a: &AgentSpec, b: &AgentSpec) -> ArenaConfig {
    ArenaConfig { agents: vec![a.setup(0), b.setup(1)], ..base.clone() }
}

pub fn run_match(a: &AgentSpec, b: &AgentSpec, arena: &ArenaConfig, seed: u64) -> Result<MatchResult> {
    run_match_with(a, b, arena, seed, |_| {})
}

/// [`run_match`] with a callback invoked before every world step.
pub fn run_match_with(a: &AgentSpec, b: &AgentSpec, arena: &ArenaConfig, seed: u64, mut observe: impl FnMut(&StepView<'_>)) -> Result<MatchResult> {
    let cfg = match_arena(arena, a, b);
    let mut world = spawn_episode(&cfg, seed)?;
    let mut ctrl = [a.build()?, b.build()?];
    for (i, c) in ctrl.iter_mut().enumerate() {
        c.reset(mix_seed(seed, 0xa9e + i as u64));
    }
    let ids = [AgentId(0), AgentId(1)];
    let mut hasher = TraceHasher::new();
    hasher.record(&world);
    let mut hits = [0u32; 2];
    let mut winner = None;
    let mut actions = Vec::with_capacity(2);
    while winner.is_none() && world.step < MAX_MATCH_STEPS {
        actions.clear();
        for (c, &id) in ctrl.iter_mut().zip(&ids) {
            actions.push((id, c.act(&world, id)?));
        }
        observe(&StepView { world: &world, actions: &actions, traces: [ctrl[0].last_trace(), ctrl[1].last_trace()] });
        let ev = world.step(&actions)?;
        hasher.record(&world);
        for i in 0..2 {
            hits[i] += ev.agent(ids[i]).hits_landed.iter().filter(|&&v| v == ids[1 - i]).count() as u32;
        }
        let alive = [world.agent(ids[0]).is_alive(), world.agent(ids[1]).is_alive()];
        winner = match alive {
            [true, false] => Some(0),
            [false, true] => Some(1),
            // Simultaneous deaths go to whoever landed more hits, then to the first agent.
            [false, false] => Some(if hits[1] > hits[0] { 1 } else { 0 }),
            _ => None,
        };
    }
    let cap = cfg.max_health;
    Ok(MatchResult {
        seed,
        winner,
        steps: world.step,
        damage_dealt: [(hits[0] as f64 * cfg.damage).min(cap), (hits[1] as f64 * cfg.damage).min(cap)],
        hits,
        restarted: winner.is_none(),
        trace_hash: hasher.finish(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub opponent: String,
    pub episodes: usize,
    pub wins: usize,
    pub losses: usize,
    /// Episodes that timed out on every attempt.
    pub unresolved: usize,
    pub win_rate: f64,
    /// Means over resolved episodes.
    pub mean_steps: f64,
    pub mean_damage: f64,
    pub win_lengths: Vec<u64>,
    pub loss_lengths: Vec<u64>,
    pub restarts: usize,
    /// Restarted matches over all matches played.
    pub restart_fraction: f64,
    /// Seed of the match counted for each episode.
    pub seeds: Vec<u64>,
}

/// Plays `episodes` matches of `a` against `b`, re-running timed-out
/// matches with fresh seeds.
pub fn evaluate(a: &AgentSpec, b: &AgentSpec, arena: &ArenaConfig, episodes: usize, base_seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::EmptyReport);
    }
    let per_episode: Vec<Result<(MatchResult, usize)>> = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut restarts = 0;
            loop {
                let seed = mix_seed(mix_seed(base_seed, k as u64), restarts as u64);
                let m = run_match(a, b, arena, seed)?;
                if !m.restarted || restarts + 1 >= MAX_ATTEMPTS as usize {
                    let r = restarts + m.restarted as usize;
                    return Ok((m, r));
                }
                restarts += 1;
            }
        })
        .collect();
    let mut r = EvalReport {
        agent: a.label.clone(),
        opponent: b.label.clone(),
        episodes,
        wins: 0,
        losses: 0,
        unresolved: 0,
        win_rate: 0.0,
        mean_steps: 0.0,
        mean_damage: 0.0,
        win_lengths: Vec::new(),
        loss_lengths: Vec::new(),
        restarts: 0,
        restart_fraction: 0.0,
        seeds: Vec::with_capacity(episodes),
    };
    let (mut steps, mut damage, mut played) = (0u64, 0.0, 0usize);
    for res in per_episode {
        let (m, restarts) = res?;
        r.restarts += restarts;
        played += restarts + (!m.restarted) as usize;
        r.seeds.push(m.seed);
        match m.winner {
            Some(0) => {
                r.wins += 1;
                r.win_lengths.push(m.steps);
            }
            Some(_) => {
                r.losses += 1;
                r.loss_lengths.push(m.steps);
            }
            None => {
                r.unresolved += 1;
                continue;
            }
        }
        steps += m.steps;
        damage += m.damage_dealt[0];
    }
    let resolved = r.wins + r.losses;
    r.win_rate = r.wins as f64 / episodes as f64;
    if resolved > 0 {
        r.mean_steps = steps as f64 / resolved as f64;
        r.mean_damage = damage / resolved as f64;
    }
    r.restart_fraction = r.restarts as f64 / played.max(1) as f64;
    Ok(r)
}

/// Fixed-width text table of the headline columns.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut s = format!("{:<24} {:<14} {:>8} {:>10} {:>10} {:>9}\n", "agent", "opponent", "win_rate", "steps", "damage", "restarts");
    for r in reports {
        s.push_str(&format!(
            "{:<24} {:<14} {:>8.2} {:>10.1} {:>10.2} {:>9.3}\n",
            r.agent, r.opponent, r.win_rate, r.mean_steps, r.mean_damage, r.restart_fraction
        ));
    }
    s
}

#[derive(Serialize)]
struct ReportRow<'a> {
    agent: &'a str,
    opponent: &'a str,
    episodes: usize,
    win_rate: f64,
    mean_steps: f64,
    mean_damage: f64,
    wins: usize,
    losses: usize,
    unresolved: usize,
    restart_fraction: f64,
}

pub fn write_report_csv(reports: &[EvalReport], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(ReportRow {
            agent: &r.agent,
            opponent: &r.opponent,
            episodes: r.episodes,
            win_rate: r.win_rate,
            mean_steps: r.mean_steps,
            mean_damage: r.mean_damage,
            wins: r.wins,
            losses: r.losses,
            unresolved: r.unresolved,
            restart_fraction: r.restart_fraction,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
