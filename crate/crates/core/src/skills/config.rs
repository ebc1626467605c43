use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::reward::RewardConfig;
use crate::arena::ArenaConfig;
use crate::btree::{parse_tree, BehaviorTree, TaskKind};
use crate::controller::{scripted_bt, Controller, Idle, Pursuer, Turret};
use crate::error::{Error, Result};
use crate::policy::NetworkSpec;
use crate::sensors::{ObservationKind, SensorConfig};

pub const PURSUER_TREE: &str = include_str!("../../../../configs/trees/pursuer.bt");

/// Scripted behavior of the non-learning agent in a training environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OpponentSpec {
    Idle,
    /// Runs straight at the learner (speed comes from the arena agent setup).
    Pursuer,
    /// Stationary; fires when aimed with a clear line.
    Turret,
    /// Scripted behavior tree: `default`, `aggressive`, `pursuer`, inline
    /// DSL text, or a path to a tree file.
    Tree { tree: String },
}

impl OpponentSpec {
    pub fn resolve_tree(tree: &str) -> Result<BehaviorTree> {
        match tree.trim() {
            "default" => Ok(BehaviorTree::default_tree()),
            "aggressive" => Ok(BehaviorTree::aggressive_tree()),
            "pursuer" => parse_tree(PURSUER_TREE),
            t if t.starts_with('(') || t.starts_with(';') => parse_tree(t),
            path => BehaviorTree::load(Path::new(path)),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Controller>> {
        Ok(match self {
            OpponentSpec::Idle => Box::new(Idle),
            OpponentSpec::Pursuer => Box::new(Pursuer),
            OpponentSpec::Turret => Box::new(Turret::default()),
            OpponentSpec::Tree { tree } => Box::new(scripted_bt(Arc::new(Self::resolve_tree(tree)?))),
        })
    }
}

/// One training environment: a skill or a curriculum phase. Agent 0 of the
/// arena is the learner and agent 1 the scripted opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
    pub observation: ObservationKind,
    pub max_episode_steps: u64,
    pub training_steps: u64,
    #[serde(default)]
    pub sensors: SensorConfig,
    pub arena: ArenaConfig,
    pub opponent: OpponentSpec,
    pub reward: RewardConfig,
}

macro_rules! bundled {
    ($($name:literal),*) => {
        &[$(($name, include_str!(concat!("../../../../configs/", $name, ".toml")))),*]
    };
}

const BUNDLED: &[(&str, &str)] = bundled!(
    "skills/flee",
    "skills/advance",
    "skills/combat",
    "skills/hide",
    "skills/collect",
    "skills/desk/flee",
    "skills/desk/advance",
    "skills/desk/combat",
    "skills/desk/hide",
    "skills/desk/collect",
    "curriculum/phase1",
    "curriculum/phase2",
    "curriculum/phase3",
    "curriculum/phase4",
    "curriculum/phase5"
);

impl EnvConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: EnvConfig = toml::from_str(s)?;
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

    /// A config shipped in `configs/`, e.g. `skills/flee` or `curriculum/phase3`.
    pub fn bundled(name: &str) -> Result<Self> {
        let text = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidConfig(format!("no bundled environment named {name}")))?;
        Self::from_toml_str(text)
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    /// Full-scale skill environment with the reward table's constants.
    pub fn skill(skill: TaskKind) -> Self {
        Self::bundled(&format!("skills/{}", skill_file(skill))).expect("bundled skill config is valid")
    }

    /// Small-arena variant used for quick training runs.
    pub fn desk_skill(skill: TaskKind) -> Self {
        Self::bundled(&format!("skills/desk/{}", skill_file(skill))).expect("bundled desk config is valid")
    }

    pub fn curriculum_phase(phase: u8) -> Result<Self> {
        Self::bundled(&format!("curriculum/phase{phase}"))
    }

    pub fn network_spec(&self) -> NetworkSpec {
        match self.skill {
            Some(s) => NetworkSpec::for_task(s),
            None => NetworkSpec::curriculum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("{}: {}", self.name, m)));
        if self.skill.is_some() == self.phase.is_some() {
            return bad("exactly one of skill and phase must be set".into());
        }
        if let Some(p) = self.phase {
            if !(1..=5).contains(&p) {
                return bad(format!("phase {p} outside 1..=5"));
            }
            if self.observation != ObservationKind::Curriculum {
                return bad("curriculum phases use the curriculum observation".into());
            }
        }
        if let Some(s) = self.skill {
            if self.observation != crate::policy::observation_kind(s) {
                return bad(format!("{} uses the {:?} observation", s, crate::policy::observation_kind(s)));
            }
        }
        if self.arena.agents.len() != 2 {
            return bad("training arenas have exactly two agents".into());
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive".into());
        }
        self.arena.validate()?;
        self.reward.validate().map_err(Error::InvalidConfig)?;
        Ok(())
    }
}

fn skill_file(skill: TaskKind) -> &'static str {
    match skill {
        TaskKind::Search => "advance",
        other => other.name(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_config_parses() {
        for name in EnvConfig::bundled_names() {
            let c = EnvConfig::bundled(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = EnvConfig::from_toml_str(&c.to_toml_string()).unwrap();
            assert_eq!(c, again, "{name}");
        }
    }

    #[test]
    fn skill_ids_and_observations() {
        for s in TaskKind::ALL {
            let c = EnvConfig::skill(s);
            assert_eq!(c.skill, Some(s));
            assert_eq!(c.max_episode_steps, 2000);
            assert_eq!(c.network_spec().input, c.observation.width());
            assert_eq!(EnvConfig::desk_skill(s).arena.side, 1000.0);
        }
        for p in 1..=5 {
            assert_eq!(EnvConfig::curriculum_phase(p).unwrap().observation, ObservationKind::Curriculum);
        }
    }

    #[test]
    fn full_size_training_budgets() {
        let steps: Vec<u64> = [TaskKind::Flee, TaskKind::Search, TaskKind::Combat, TaskKind::Hide, TaskKind::Collect]
            .iter()
            .map(|&s| EnvConfig::skill(s).training_steps)
            .collect();
        assert_eq!(steps, vec![2_000_000, 4_000_000, 2_000_000, 10_000_000, 12_000_000]);
        let phases: Vec<u64> = (1..=5).map(|p| EnvConfig::curriculum_phase(p).unwrap().training_steps).collect();
        assert_eq!(phases, vec![6_000_000, 2_000_000, 10_000_000, 12_000_000, 10_000_000]);
        for s in TaskKind::ALL {
            assert!(EnvConfig::desk_skill(s).training_steps <= 500_000);
        }
    }

    #[test]
    fn mismatched_observation_is_rejected() {
        let mut c = EnvConfig::skill(TaskKind::Hide);
        c.observation = ObservationKind::Core;
        assert!(c.validate().is_err());
    }
}
