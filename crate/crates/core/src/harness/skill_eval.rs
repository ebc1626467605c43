//! Scoring trained skill policies in their own training environments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::ActionCommand;
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, PolicyRunner};
use crate::ppo::mix_seed;
use crate::skills::{EnvConfig, Environment, SkillEnv, TerminalEvent};

/// How the learner's actions are chosen during a skill evaluation.
#[derive(Debug, Clone)]
pub enum SkillActor<'a> {
    /// Trained policy; `deterministic` takes the distribution mode.
    Policy { params: &'a PolicyParams, deterministic: bool },
    /// Movement uniform on the command square, shooting with probability 1/2.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillEvalReport {
    pub skill: String,
    pub episodes: usize,
    pub mean_length: f64,
    pub mean_reward: f64,
    /// Episodes ended by a terminal rule (not the step cap).
    pub terminal_rate: f64,
    pub kill_rate: f64,
    pub in_sight_rate: f64,
    pub caught_rate: f64,
    pub reload_rate: f64,
    pub lengths: Vec<u64>,
}

/// Runs `episodes` episodes of `env` with seeds derived from `seed`.
pub fn evaluate_skill(env: &EnvConfig, actor: SkillActor<'_>, episodes: usize, seed: u64) -> Result<SkillEvalReport> {
    if episodes == 0 {
        return Err(Error::EmptyReport);
    }
    let mut e = SkillEnv::new(env.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5eed));
    let mut runner = match &actor {
        SkillActor::Policy { params, .. } => Some(PolicyRunner::new(params, 1)),
        SkillActor::UniformRandom => None,
    };
    let rule = |ev: TerminalEvent| env.reward.terminals.iter().find(|r| r.on == ev);
    let (mut kills, mut sights, mut caught, mut reloads, mut terminal) = (0, 0, 0, 0, 0);
    let (mut total_len, mut total_reward) = (0u64, 0.0);
    let mut lengths = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut obs = e.reset(mix_seed(seed, k as u64))?;
        if let Some(r) = runner.as_mut() {
            r.reset_all();
        }
        let mut len = 0u64;
        loop {
            let cmd = match (&actor, runner.as_mut()) {
                (SkillActor::Policy { deterministic, .. }, Some(r)) => r.step_one(0, &obs).dist.select(&mut rng, *deterministic).command(),
                _ => ActionCommand::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_bool(0.5)),
            };
            let st = e.step(cmd)?;
            len += 1;
            total_reward += st.reward;
            if st.done {
                terminal += 1;
                let t = &st.transition;
                kills += t.opponent_killed as usize;
                sights += rule(TerminalEvent::InSight).is_some_and(|r| t.fires(r)) as usize;
                caught += rule(TerminalEvent::Caught).is_some_and(|r| t.fires(r)) as usize;
                reloads += (t.pickups > 0) as usize;
                break;
            }
            if len >= env.max_episode_steps {
                break;
            }
            obs = st.observation;
        }
        total_len += len;
        lengths.push(len);
    }
    let n = episodes as f64;
    Ok(SkillEvalReport {
        skill: env.skill.map_or_else(|| env.name.clone(), |s| s.name().to_string()),
        episodes,
        mean_length: total_len as f64 / n,
        mean_reward: total_reward / n,
        terminal_rate: terminal as f64 / n,
        kill_rate: kills as f64 / n,
        in_sight_rate: sights as f64 / n,
        caught_rate: caught as f64 / n,
        reload_rate: reloads as f64 / n,
        lengths,
    })
}
