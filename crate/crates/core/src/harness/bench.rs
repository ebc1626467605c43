//! Wall-clock simulation throughput.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::agents::AgentSpec;
use crate::arena::{spawn_episode, ActionCommand, AgentId, AgentSetup, ArenaConfig, WorldState};
use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::ppo::mix_seed;

/// Who drives the benchmarked agents.
#[derive(Debug, Clone)]
pub enum BenchAgent {
    /// Agents stand idle; measures the simulation alone.
    NoModel,
    Spec(AgentSpec),
}

impl BenchAgent {
    pub fn label(&self) -> String {
        match self {
            BenchAgent::NoModel => "no-model".into(),
            BenchAgent::Spec(s) => s.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub setting: String,
    pub agents: usize,
    pub steps: u64,
    /// Steps per second of each repeat.
    pub rates: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub std: f64,
}

/// Evaluation arena holding `n` controlled agents on team 0 and one idle
/// target on team 1.
pub fn bench_arena(n: usize) -> ArenaConfig {
    let mut cfg = ArenaConfig::evaluation();
    cfg.agents = (0..n).map(|_| AgentSetup::team(0)).chain(std::iter::once(AgentSetup::team(1))).collect();
    cfg.spawn.min_separation = 200.0;
    cfg
}

struct Bench {
    cfg: ArenaConfig,
    world: WorldState,
    ctrl: Vec<Box<dyn Controller>>,
    seed: u64,
    episode: u64,
}

impl Bench {
    fn new(agent: &BenchAgent, n: usize, seed: u64) -> Result<Self> {
        let cfg = bench_arena(n);
        let ctrl = match agent {
            BenchAgent::NoModel => Vec::new(),
            BenchAgent::Spec(s) => (0..n).map(|_| s.build()).collect::<Result<_>>()?,
        };
        let world = spawn_episode(&cfg, seed)?;
        let mut b = Bench { cfg, world, ctrl, seed, episode: 0 };
        b.reset_controllers();
        Ok(b)
    }

    fn reset_controllers(&mut self) {
        for (i, c) in self.ctrl.iter_mut().enumerate() {
            c.reset(mix_seed(self.world.seed, i as u64));
        }
    }

    fn run(&mut self, steps: u64) -> Result<()> {
        let n = self.cfg.agents.len() - 1;
        let target = AgentId(n as u32);
        let mut actions = Vec::with_capacity(n + 1);
        for _ in 0..steps {
            actions.clear();
            for i in 0..n {
                let id = AgentId(i as u32);
                if !self.world.agent(id).is_alive() {
                    continue;
                }
                let a = match self.ctrl.get_mut(i) {
                    Some(c) => c.act(&self.world, id)?,
                    None => ActionCommand::IDLE,
                };
                actions.push((id, a));
            }
            actions.push((target, ActionCommand::IDLE));
            self.world.step(&actions)?;
            if !self.world.agent(target).is_alive() || self.world.step >= super::MAX_MATCH_STEPS {
                self.episode += 1;
                self.world = spawn_episode(&self.cfg, mix_seed(self.seed, self.episode))?;
                self.reset_controllers();
            }
        }
        Ok(())
    }
}

/// Times `steps` world steps with `n_agents` agents of the given kind, once
/// per repeat. Each repeat starts from the same seed.
pub fn bench_throughput(agent: &BenchAgent, n_agents: usize, steps: u64, repeats: usize, seed: u64) -> Result<BenchResult> {
    if n_agents == 0 || steps == 0 || repeats == 0 {
        return Err(Error::InvalidConfig("benchmark needs agents, steps and repeats".into()));
    }
    let mut rates = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut b = Bench::new(agent, n_agents, seed)?;
        let t0 = Instant::now();
        b.run(steps)?;
        rates.push(steps as f64 / t0.elapsed().as_secs_f64());
    }
    let (mean, std) = mean_std(&rates);
    Ok(BenchResult { setting: agent.label(), agents: n_agents, steps, rates, mean, std })
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Standard deviation pooled from two equally sized samples.
pub fn pooled_std(a: &BenchResult, b: &BenchResult) -> f64 {
    ((a.std * a.std + b.std * b.std) / 2.0).sqrt()
}

/// `a` is faster than `b` by more than two pooled standard deviations.
pub fn clearly_faster(a: &BenchResult, b: &BenchResult) -> bool {
    a.mean - b.mean > 2.0 * pooled_std(a, b)
}

pub fn write_bench_csv(results: &[BenchResult], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["setting", "agents", "steps", "repeats", "mean_sps", "std_sps", "threads", "os", "arch"])?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).to_string();
    for r in results {
        w.write_record([
            r.setting.clone(),
            r.agents.to_string(),
            r.steps.to_string(),
            r.rates.len().to_string(),
            format!("{:.3}", r.mean),
            format!("{:.3}", r.std),
            threads.clone(),
            std::env::consts::OS.to_string(),
            std::env::consts::ARCH.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_zero_std() {
        let r = bench_throughput(&BenchAgent::NoModel, 1, 200, 1, 1).unwrap();
        assert_eq!(r.std, 0.0);
        assert!(r.mean > 0.0);
    }

    #[test]
    fn sample_statistics() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn bt_agents_run_through_resets() {
        let r = bench_throughput(&BenchAgent::Spec(AgentSpec::bt()), 10, 3000, 1, 2).unwrap();
        assert_eq!(r.agents, 10);
        assert!(bench_throughput(&BenchAgent::NoModel, 0, 10, 1, 1).is_err());
    }
}
