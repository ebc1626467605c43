//! Skill-training environments, reward tables and the curriculum.

mod config;
mod curriculum;
mod env;
mod reward;

pub use config::{EnvConfig, OpponentSpec, PURSUER_TREE};
pub use curriculum::{curriculum_phases, make_curriculum_env, run_curriculum, CurriculumOutcome};
pub use env::{make_skill_env, EnvStep, Environment, SkillEnv, LEARNER, OPPONENT};
pub use reward::{skill_reward, RewardConfig, TerminalEvent, TerminalRule, Transition};
