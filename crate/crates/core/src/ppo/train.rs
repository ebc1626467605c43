//! Collect / estimate / update loop with checkpoints and a metric stream.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PpoConfig;
use super::rollout::{compute_gae, mix_seed, Collector, RolloutBatch};
use super::update::{Learner, LearnerState, UpdateStats};
use crate::error::{Error, Result};
use crate::policy::{ModelMeta, PolicyParams};
use crate::skills::{EnvConfig, SkillEnv};

pub const CHECKPOINT_FILE: &str = "checkpoint.sbrl";
pub const STATE_FILE: &str = "trainer_state.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MODEL_FILE: &str = "model.sbrl";

/// One line of the metric stream, written after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
    pub batch: u64,
    /// Environment steps consumed so far.
    pub steps: u64,
    pub episodes: usize,
    /// Means over episodes that finished in this batch.
    pub reward_mean: Option<f64>,
    pub length_mean: Option<f64>,
    /// Fraction of finished episodes that ended on a terminal condition.
    pub terminal_rate: Option<f64>,
    #[serde(flatten)]
    pub update: UpdateStats,
}

impl MetricRecord {
    fn from_batch(phase: Option<u8>, batch_no: u64, steps: u64, b: &RolloutBatch, update: UpdateStats) -> Self {
        let n = b.episodes.len();
        let mean = |f: &dyn Fn(&super::rollout::EpisodeSummary) -> f64| (n > 0).then(|| b.episodes.iter().map(f).sum::<f64>() / n as f64);
        MetricRecord {
            phase,
            batch: batch_no,
            steps,
            episodes: n,
            reward_mean: mean(&|e| e.total_reward),
            length_mean: mean(&|e| e.length as f64),
            terminal_rate: mean(&|e| if e.truncated { 0.0 } else { 1.0 }),
            update,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    env: EnvConfig,
    ppo: PpoConfig,
    seed: u64,
    phase: Option<u8>,
    batches: u64,
    steps: u64,
    total_steps: u64,
    learner: LearnerState,
    collector: serde_json::Value,
}

/// Trains one policy on one environment config.
pub struct Trainer {
    env: EnvConfig,
    cfg: PpoConfig,
    seed: u64,
    phase: Option<u8>,
    learner: Learner,
    collector: Collector<SkillEnv>,
    batches: u64,
    steps: u64,
    total_steps: u64,
}

fn make_collector(env: &EnvConfig, cfg: &PpoConfig, seed: u64, history: usize) -> Result<Collector<SkillEnv>> {
    let envs = (0..cfg.num_envs).map(|_| SkillEnv::new(env.clone())).collect::<Result<Vec<_>>>()?;
    Collector::new(envs, mix_seed(seed, 3), cfg.max_episode_steps.min(env.max_episode_steps), history, cfg.deterministic_rollouts)
}

impl Trainer {
    /// Starts from `init` or from freshly initialized parameters.
    pub fn new(env: EnvConfig, cfg: PpoConfig, seed: u64, init: Option<PolicyParams>) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let spec = env.network_spec();
        let params = match init {
            Some(p) if p.spec != spec => return Err(Error::SpecMismatch { expected: spec.hash(), found: p.spec.hash() }),
            Some(p) => p,
            None => PolicyParams::init(&spec, mix_seed(seed, 1)),
        };
        let collector = make_collector(&env, &cfg, seed, spec.history_len())?;
        let learner = Learner::new(params, &cfg, mix_seed(seed, 2));
        let total_steps = cfg.total_steps.unwrap_or(env.training_steps);
        Ok(Trainer { phase: env.phase, env, cfg, seed, learner, collector, batches: 0, steps: 0, total_steps })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.learner.params
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn finished(&self) -> bool {
        self.steps >= self.total_steps
    }

    /// Collects one train batch, estimates advantages and updates.
    pub fn train_batch(&mut self) -> Result<MetricRecord> {
        let mut batch = self.collector.collect(&self.learner.params, self.cfg.steps_per_env())?;
        compute_gae(&mut batch, self.cfg.gamma, self.cfg.gae_lambda);
        let stats = self.learner.update(&batch, &self.cfg)?;
        self.batches += 1;
        self.steps += batch.len() as u64;
        Ok(MetricRecord::from_batch(self.phase, self.batches, self.steps, &batch, stats))
    }

    /// Trains until the step budget is spent or `max_batches` more updates
    /// have run. With an output directory, metrics are appended there and
    /// checkpoints written on schedule and at the end.
    pub fn run(&mut self, out: Option<&Path>, max_batches: Option<u64>) -> Result<Vec<MetricRecord>> {
        let mut records = Vec::new();
        let mut sink = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(METRICS_FILE);
                let f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
                Some((path, f))
            }
            None => None,
        };
        let mut ran = 0;
        while !self.finished() && max_batches.is_none_or(|m| ran < m) {
            let rec = self.train_batch()?;
            ran += 1;
            log::info!(
                "batch {} steps {} reward {:?} len {:?} kl {:.4}",
                rec.batch,
                rec.steps,
                rec.reward_mean,
                rec.length_mean,
                rec.update.kl
            );
            if let Some((path, f)) = sink.as_mut() {
                let line = serde_json::to_string(&rec)?;
                writeln!(f, "{line}").map_err(|e| Error::io(&*path, e))?;
            }
            records.push(rec);
            if let Some(dir) = out {
                if self.cfg.checkpoint_every > 0 && self.batches % self.cfg.checkpoint_every == 0 {
                    self.save_checkpoint(dir)?;
                }
            }
        }
        if let Some(dir) = out {
            self.save_checkpoint(dir)?;
            if self.finished() {
                self.save_model(&dir.join(MODEL_FILE))?;
            }
        }
        Ok(records)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.learner.params.save(&dir.join(CHECKPOINT_FILE))?;
        let state = TrainerState {
            env: self.env.clone(),
            ppo: self.cfg.clone(),
            seed: self.seed,
            phase: self.phase,
            batches: self.batches,
            steps: self.steps,
            total_steps: self.total_steps,
            learner: self.learner.state(),
            collector: self.collector.snapshot()?,
        };
        let path = dir.join(STATE_FILE);
        std::fs::write(&path, serde_json::to_vec(&state)?).map_err(|e| Error::io(&path, e))
    }

    /// Continues a run from the checkpoint in `dir`.
    pub fn resume(dir: &Path) -> Result<Self> {
        let path = dir.join(STATE_FILE);
        let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let s: TrainerState = serde_json::from_slice(&text)?;
        let spec = s.env.network_spec();
        let params = PolicyParams::load(&dir.join(CHECKPOINT_FILE), &spec)?;
        let mut collector = make_collector(&s.env, &s.ppo, s.seed, spec.history_len())?;
        collector.restore(s.collector)?;
        Ok(Trainer {
            learner: Learner::from_state(params, s.learner)?,
            env: s.env,
            cfg: s.ppo,
            seed: s.seed,
            phase: s.phase,
            collector,
            batches: s.batches,
            steps: s.steps,
            total_steps: s.total_steps,
        })
    }

    /// Writes the current parameters plus a metadata sidecar.
    pub fn save_model(&self, path: &Path) -> Result<()> {
        self.learner.params.save(path)?;
        ModelMeta {
            skill: self.env.skill.map_or_else(|| self.env.name.clone(), |s| s.name().to_string()),
            training_steps: self.steps,
            config_hash: config_hash(&self.env, &self.cfg),
            spec_hash: format!("{:016x}", self.learner.params.spec.hash()),
            seed: self.seed,
        }
        .save(path)
    }
}

/// SHA-256 of the serialized environment and trainer configs.
pub fn config_hash(env: &EnvConfig, cfg: &PpoConfig) -> String {
    let mut h = Sha256::new();
    h.update(env.to_toml_string().as_bytes());
    h.update(cfg.to_toml_string().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: Vec<MetricRecord>,
    /// Where the model was written, when an output directory was given.
    pub model_path: Option<PathBuf>,
}

/// Trains a fresh policy on `env` for its full budget.
pub fn train_skill(env: &EnvConfig, cfg: &PpoConfig, seed: u64, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(env.clone(), cfg.clone(), seed, None)?;
    let metrics = t.run(out, None)?;
    Ok(TrainOutcome { params: t.params().clone(), metrics, model_path: out.map(|d| d.join(MODEL_FILE)) })
}
