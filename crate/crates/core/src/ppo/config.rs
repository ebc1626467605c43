use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trainer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub vf_coeff: f64,
    /// Cap on the per-sample squared value error.
    pub vf_clip: f64,
    pub entropy_coeff: f64,
    pub kl_coeff: f64,
    pub kl_target: f64,
    /// Transitions per update, summed over environments.
    pub train_batch: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub max_episode_steps: u64,
    pub num_envs: usize,
    pub grad_clip: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Overrides the environment's training budget when set.
    pub total_steps: Option<u64>,
    /// Write a checkpoint every this many updates (0: only at the end).
    pub checkpoint_every: u64,
    /// Greedy actions during collection (for debugging; off for training).
    pub deterministic_rollouts: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 1.0,
            clip: 0.3,
            vf_coeff: 1.0,
            vf_clip: 10.0,
            entropy_coeff: 0.0,
            kl_coeff: 0.2,
            kl_target: 0.01,
            train_batch: 4000,
            minibatch: 128,
            epochs: 30,
            max_episode_steps: 2000,
            num_envs: 8,
            grad_clip: 40.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            total_steps: None,
            checkpoint_every: 0,
            deterministic_rollouts: false,
        }
    }
}

const DESK: &str = include_str!("../../../../configs/ppo/desk.toml");

impl PpoConfig {
    /// Settings for the scaled-down desk training runs.
    pub fn desk() -> Self {
        Self::from_toml_str(DESK).expect("bundled desk ppo config is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: PpoConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Per-environment steps in one train batch.
    pub fn steps_per_env(&self) -> usize {
        self.train_batch.div_ceil(self.num_envs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if self.vf_coeff < 0.0 || !(self.vf_clip > 0.0) || self.entropy_coeff < 0.0 || self.kl_coeff < 0.0 {
            return bad("loss coefficients must be non-negative and vf_clip positive");
        }
        if !(self.kl_target > 0.0) || !(self.grad_clip > 0.0) {
            return bad("kl_target and grad_clip must be positive");
        }
        if self.train_batch == 0 || self.minibatch == 0 || self.epochs == 0 || self.num_envs == 0 {
            return bad("train_batch, minibatch, epochs and num_envs must be positive");
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_files_agree() {
        let file = PpoConfig::from_toml_str(include_str!("../../../../configs/ppo/default.toml")).unwrap();
        assert_eq!(file, PpoConfig::default());
        let d = PpoConfig::default();
        assert_eq!((d.learning_rate, d.gamma, d.gae_lambda, d.clip), (3e-4, 0.99, 1.0, 0.3));
        assert_eq!((d.train_batch, d.minibatch, d.epochs, d.max_episode_steps), (4000, 128, 30, 2000));
        assert_eq!((d.kl_coeff, d.kl_target, d.vf_clip, d.grad_clip), (0.2, 0.01, 10.0, 40.0));
        PpoConfig::desk().validate().unwrap();
    }

    #[test]
    fn invalid_clip_rejected() {
        assert!(PpoConfig { clip: 1.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig::from_toml_str("bogus = 1").is_err());
    }
}
