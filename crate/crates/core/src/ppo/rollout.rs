//! Vectorized experience collection.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::{gae, normalize_advantages};
use crate::error::Result;
use crate::policy::{ActionDistribution, PolicyParams, PolicyRunner};
use crate::skills::{EnvStep, Environment, Transition};

/// SplitMix64 finalizer over two words; used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One decision and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Inclusive range of observation rows the policy saw, newest last.
    pub window: (usize, usize),
    pub movement: [f64; 2],
    pub shoot: Option<bool>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Episode ended here, by a terminal rule or the step cap.
    pub done: bool,
    pub episode: u64,
    /// Distribution the action was drawn from.
    pub dist: ActionDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub total_reward: f64,
    pub length: u64,
    /// Stopped by the step cap rather than a terminal condition.
    pub truncated: bool,
    pub last: Transition,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs_width: usize,
    /// Row-major observation table referenced by step windows.
    pub observations: Vec<f32>,
    pub steps: Vec<StepRecord>,
    /// Step ranges belonging to each environment, in order.
    pub streams: Vec<Range<usize>>,
    /// Value of the observation following each stream's last step.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Episodes that finished during this batch.
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.observations[i * self.obs_width..(i + 1) * self.obs_width]
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Fills advantages (normalized over the batch) and returns (unnormalized).
pub fn compute_gae(batch: &mut RolloutBatch, gamma: f64, lambda: f64) {
    let mut adv = Vec::with_capacity(batch.len());
    let mut ret = Vec::with_capacity(batch.len());
    for (range, &last) in batch.streams.iter().zip(&batch.bootstrap) {
        let s = &batch.steps[range.clone()];
        let r: Vec<f64> = s.iter().map(|x| x.reward).collect();
        let v: Vec<f64> = s.iter().map(|x| x.value).collect();
        let d: Vec<bool> = s.iter().map(|x| x.done).collect();
        let (a, g) = gae(&r, &v, &d, last, gamma, lambda);
        adv.extend(a);
        ret.extend(g);
    }
    normalize_advantages(&mut adv);
    batch.advantages = adv;
    batch.returns = ret;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StreamState {
    obs: Vec<f32>,
    /// Earlier observations of the current episode, oldest first.
    history: Vec<Vec<f32>>,
    episode_steps: u64,
    episode_return: f64,
    episode: u64,
    episodes_started: u64,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct CollectorState {
    streams: Vec<StreamState>,
    envs: Vec<serde_json::Value>,
}

/// Steps a fixed set of environments with a policy, carrying unfinished
/// episodes over from one batch to the next.
pub struct Collector<E> {
    envs: Vec<E>,
    streams: Vec<StreamState>,
    seed: u64,
    max_episode_steps: u64,
    history: usize,
    deterministic: bool,
}

impl<E: Environment> Collector<E> {
    /// Resets every environment; `history` is the policy's window length.
    pub fn new(mut envs: Vec<E>, seed: u64, max_episode_steps: u64, history: usize, deterministic: bool) -> Result<Self> {
        assert!(!envs.is_empty() && history > 0 && max_episode_steps > 0);
        let mut streams = Vec::with_capacity(envs.len());
        for (i, env) in envs.iter_mut().enumerate() {
            let obs = env.reset(episode_seed(seed, i, 0))?;
            streams.push(StreamState {
                obs,
                history: Vec::new(),
                episode_steps: 0,
                episode_return: 0.0,
                episode: episode_id(i, 0),
                episodes_started: 1,
                rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xac7 + i as u64)),
            });
        }
        Ok(Collector { envs, streams, seed, max_episode_steps, history, deterministic })
    }

    pub fn env_count(&self) -> usize {
        self.envs.len()
    }

    pub fn envs(&self) -> &[E] {
        &self.envs
    }

    /// Runs `n_steps` decisions in every environment.
    pub fn collect(&mut self, params: &PolicyParams, n_steps: usize) -> Result<RolloutBatch> {
        let n = self.envs.len();
        let width = params.spec.input;
        let mut runner = PolicyRunner::new(params, n);
        let mut rows: Vec<Vec<f32>> = vec![Vec::new(); n];
        let mut steps: Vec<Vec<StepRecord>> = vec![Vec::with_capacity(n_steps); n];
        let mut ep_start = vec![0usize; n];
        for (i, s) in self.streams.iter().enumerate() {
            for h in &s.history {
                runner.step_one(i, h);
                rows[i].extend_from_slice(h);
            }
        }
        let mut episodes = Vec::new();
        for _ in 0..n_steps {
            let requests: Vec<(usize, &[f32])> = self.streams.iter().enumerate().map(|(i, s)| (i, s.obs.as_slice())).collect();
            let outs = runner.step(&requests);
            let mut actions = Vec::with_capacity(n);
            for (i, (s, out)) in self.streams.iter_mut().zip(&outs).enumerate() {
                let a = out.dist.select(&mut s.rng, self.deterministic);
                let r = rows[i].len() / width;
                rows[i].extend_from_slice(&s.obs);
                let first = ep_start[i].max((r + 1).saturating_sub(self.history));
                steps[i].push(StepRecord {
                    window: (first, r),
                    movement: a.movement,
                    shoot: a.shoot,
                    log_prob: a.log_prob,
                    reward: 0.0,
                    value: out.value,
                    done: false,
                    episode: s.episode,
                    dist: out.dist,
                });
                actions.push(a.command());
            }
            let results: Vec<Result<EnvStep>> = self.envs.par_iter_mut().zip(actions).map(|(e, a)| e.step(a)).collect();
            for (i, res) in results.into_iter().enumerate() {
                let st = res?;
                let s = &mut self.streams[i];
                s.episode_steps += 1;
                s.episode_return += st.reward;
                let truncated = !st.done && s.episode_steps >= self.max_episode_steps;
                let rec = steps[i].last_mut().expect("pushed above");
                rec.reward = st.reward;
                rec.done = st.done || truncated;
                if rec.done {
                    episodes.push(EpisodeSummary {
                        episode: s.episode,
                        total_reward: s.episode_return,
                        length: s.episode_steps,
                        truncated,
                        last: st.transition,
                    });
                    let k = s.episodes_started;
                    s.obs = self.envs[i].reset(episode_seed(self.seed, i, k))?;
                    s.episodes_started += 1;
                    s.episode = episode_id(i, k);
                    s.episode_steps = 0;
                    s.episode_return = 0.0;
                    s.history.clear();
                    runner.reset(i);
                    ep_start[i] = rows[i].len() / width;
                } else {
                    let prev = std::mem::replace(&mut s.obs, st.observation);
                    if self.history > 1 {
                        if s.history.len() + 1 == self.history {
                            s.history.remove(0);
                        }
                        s.history.push(prev);
                    }
                }
            }
        }

        let mut batch = RolloutBatch { obs_width: width, episodes, ..Default::default() };
        for i in 0..n {
            let row_offset = batch.observations.len() / width;
            let start = batch.steps.len();
            batch.observations.extend_from_slice(&rows[i]);
            for mut rec in steps[i].drain(..) {
                rec.window = (rec.window.0 + row_offset, rec.window.1 + row_offset);
                batch.steps.push(rec);
            }
            batch.streams.push(start..batch.steps.len());
            let ended = batch.steps.last().is_some_and(|s| s.done);
            batch.bootstrap.push(if ended { 0.0 } else { runner.peek_value(i, &self.streams[i].obs) });
        }
        Ok(batch)
    }

    /// Mid-episode state of every environment and stream.
    pub fn snapshot(&self) -> Result<serde_json::Value> {
        let envs = self.envs.iter().map(|e| e.snapshot()).collect::<Result<Vec<_>>>()?;
        Ok(serde_json::to_value(CollectorState { streams: self.streams.clone(), envs })?)
    }

    pub fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        let s: CollectorState = serde_json::from_value(state)?;
        if s.envs.len() != self.envs.len() {
            return Err(crate::Error::InvalidConfig(format!("checkpoint has {} environments, config has {}", s.envs.len(), self.envs.len())));
        }
        for (e, v) in self.envs.iter_mut().zip(s.envs) {
            e.restore(v)?;
        }
        self.streams = s.streams;
        Ok(())
    }
}

pub fn episode_seed(seed: u64, env: usize, episode: u64) -> u64 {
    mix_seed(mix_seed(seed, env as u64), episode)
}

fn episode_id(env: usize, k: u64) -> u64 {
    ((env as u64) << 40) | k
}
