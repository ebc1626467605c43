//! Proximal policy optimization for skill and curriculum policies.

mod config;
mod gae;
mod rollout;
mod train;
mod update;

pub use config::PpoConfig;
pub use gae::{gae, normalize_advantages};
pub use rollout::{compute_gae, episode_seed, mix_seed, Collector, EpisodeSummary, RolloutBatch, StepRecord};
pub use train::{config_hash, train_skill, MetricRecord, TrainOutcome, Trainer, CHECKPOINT_FILE, METRICS_FILE, MODEL_FILE, STATE_FILE};
pub use update::{clip_global_norm, ppo_loss, ppo_update, Adam, Learner, LearnerState, LossTerms, Minibatch, UpdateStats};
