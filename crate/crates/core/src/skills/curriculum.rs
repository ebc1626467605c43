//! Five-phase curriculum for a single policy.

use std::io::Write;
use std::path::Path;

use super::config::EnvConfig;
use super::env::{make_skill_env, SkillEnv};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::ppo::{mix_seed, MetricRecord, PpoConfig, Trainer, METRICS_FILE, MODEL_FILE};

pub fn make_curriculum_env(phase: u8, seed: u64) -> Result<(SkillEnv, Vec<f32>)> {
    make_skill_env(&EnvConfig::curriculum_phase(phase)?, seed)
}

/// The bundled phase configs, in order.
pub fn curriculum_phases() -> Vec<EnvConfig> {
    (1..=5).map(|p| EnvConfig::curriculum_phase(p).expect("bundled phase config is valid")).collect()
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub params: PolicyParams,
    /// Every phase's records, tagged with the phase id.
    pub metrics: Vec<MetricRecord>,
    /// Parameters at the end of each phase.
    pub phase_params: Vec<PolicyParams>,
}

/// Trains one policy through `phases` in order, carrying parameters (not
/// optimizer state) across boundaries. `cfg.total_steps`, when set, replaces
/// every phase's own budget. With `out`, each phase checkpoints into
/// `phaseN/` and the combined metric stream goes to `out/metrics.jsonl`.
pub fn run_curriculum(phases: &[EnvConfig], cfg: &PpoConfig, seed: u64, out: Option<&Path>) -> Result<CurriculumOutcome> {
    if phases.is_empty() {
        return Err(Error::InvalidConfig("curriculum needs at least one phase".into()));
    }
    let spec = phases[0].network_spec();
    if let Some(p) = phases.iter().find(|p| p.network_spec() != spec) {
        return Err(Error::InvalidConfig(format!("phase {} uses a different network", p.name)));
    }
    let mut params = PolicyParams::init(&spec, mix_seed(seed, 1));
    let mut metrics = Vec::new();
    let mut phase_params = Vec::with_capacity(phases.len());
    for (i, env) in phases.iter().enumerate() {
        let phase_seed = mix_seed(seed, 100 + i as u64);
        let mut t = Trainer::new(env.clone(), cfg.clone(), phase_seed, Some(params))?;
        let dir = out.map(|d| d.join(format!("phase{}", env.phase.unwrap_or(i as u8 + 1))));
        log::info!("curriculum phase {} ({}) for {} steps", i + 1, env.name, t.total_steps());
        let records = t.run(dir.as_deref(), None)?;
        if let Some(d) = out {
            let path = d.join(METRICS_FILE);
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
            for r in &records {
                writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(&path, e))?;
            }
        }
        metrics.extend(records);
        params = t.params().clone();
        phase_params.push(params.clone());
        if let Some(d) = out {
            t.save_model(&d.join(MODEL_FILE))?;
        }
    }
    Ok(CurriculumOutcome { params, metrics, phase_params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_run_in_order_and_carry_parameters() {
        let cfg = PpoConfig { total_steps: Some(128), train_batch: 64, num_envs: 2, minibatch: 32, epochs: 1, ..PpoConfig::default() };
        let phases = vec![EnvConfig::curriculum_phase(1).unwrap(), EnvConfig::curriculum_phase(3).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        let out = run_curriculum(&phases, &cfg, 2, Some(dir.path())).unwrap();
        let tags: Vec<Option<u8>> = out.metrics.iter().map(|m| m.phase).collect();
        assert_eq!(tags, vec![Some(1), Some(1), Some(3), Some(3)]);
        assert_ne!(out.phase_params[0], out.phase_params[1]);
        assert_eq!(out.params, out.phase_params[1]);
        let lines = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 4);
        assert!(dir.path().join("phase1").join(crate::ppo::CHECKPOINT_FILE).exists());
        assert_eq!(PolicyParams::load_any(&dir.path().join(MODEL_FILE)).unwrap(), out.params);
    }

    #[test]
    fn observation_width_is_shared() {
        let widths: Vec<usize> = (1..=5).map(|p| make_curriculum_env(p, 1).unwrap().1.len()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]));
        assert!(make_curriculum_env(6, 1).is_err());
    }
}
