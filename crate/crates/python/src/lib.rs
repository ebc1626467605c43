//! Python module `sbrl`: worlds, skill environments, matches, training and
//! the numeric helpers behind them.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sbrl_core::arena::{spawn_episode, ActionCommand, AgentId, ArenaConfig, CategoryMask, WorldState};
use sbrl_core::btree::{parse_tree as parse_dsl, TaskKind};
use sbrl_core::geom::Vec2;
use sbrl_core::harness::{self, AgentSpec, BenchAgent, SkillActor};
use sbrl_core::policy::{NetworkSpec, PolicyParams};
use sbrl_core::ppo::{self, PpoConfig};
use sbrl_core::sensors::{encode, ObservationKind, SensorConfig};
use sbrl_core::skills::{EnvConfig, Environment, SkillEnv};
use sbrl_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Csv(_) | Error::CorruptFile(_) => PyIOError::new_err(e.to_string()),
        Error::TraceMismatch(_) | Error::NonFiniteLoss { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn task(name: &str) -> PyResult<TaskKind> {
    TaskKind::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown skill {name}")))
}

fn observation_kind(name: &str) -> PyResult<ObservationKind> {
    Ok(match name {
        "core" => ObservationKind::Core,
        "hide" => ObservationKind::Hide,
        "collect" => ObservationKind::Collect,
        "curriculum" => ObservationKind::Curriculum,
        other => return Err(PyValueError::new_err(format!("unknown observation kind {other}"))),
    })
}

fn skill_env_config(skill: &str, desk: bool) -> PyResult<EnvConfig> {
    if let Some(phase) = skill.strip_prefix("phase") {
        let p: u8 = phase.parse().map_err(|_| PyValueError::new_err(format!("bad phase {skill}")))?;
        return EnvConfig::curriculum_phase(p).map_err(py_err);
    }
    let t = task(skill)?;
    Ok(if desk { EnvConfig::desk_skill(t) } else { EnvConfig::skill(t) })
}

/// A simulated arena. `arena` is TOML text; the evaluation arena is used
/// when it is omitted.
#[pyclass(unsendable, name = "World")]
struct PyWorld {
    world: WorldState,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (seed=0, arena=None))]
    fn new(seed: u64, arena: Option<&str>) -> PyResult<Self> {
        let cfg = match arena {
            Some(text) => ArenaConfig::from_toml_str(text).map_err(py_err)?,
            None => ArenaConfig::evaluation(),
        };
        Ok(PyWorld { world: spawn_episode(&cfg, seed).map_err(py_err)? })
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.world.step
    }

    #[getter]
    fn side(&self) -> f64 {
        self.world.arena_side
    }

    fn positions(&self) -> Vec<(f64, f64)> {
        self.world.agents.iter().map(|a| (a.position.x, a.position.y)).collect()
    }

    fn health(&self) -> Vec<f64> {
        self.world.agents.iter().map(|a| a.health).collect()
    }

    fn ammo(&self) -> Vec<u32> {
        self.world.agents.iter().map(|a| a.ammo).collect()
    }

    /// Advances one step. `actions` holds one `(lateral, forward, shoot)`
    /// per agent; entries for dead agents are ignored. Returns per-agent
    /// `(hits_landed, hits_taken, died)`.
    fn step(&mut self, actions: Vec<(f64, f64, bool)>) -> PyResult<Vec<(usize, u32, bool)>> {
        if actions.len() != self.world.agents.len() {
            return Err(PyValueError::new_err(format!("{} actions for {} agents", actions.len(), self.world.agents.len())));
        }
        let cmds: Vec<(AgentId, ActionCommand)> = self
            .world
            .agents
            .iter()
            .zip(&actions)
            .filter(|(a, _)| a.is_alive())
            .map(|(a, &(l, f, s))| (a.id, ActionCommand::new(l, f, s)))
            .collect();
        let ev = self.world.step(&cmds).map_err(py_err)?;
        Ok(self.world.agents.iter().map(|a| {
            let e = ev.agent(a.id);
            (e.hits_landed.len(), e.hits_taken, e.died)
        }).collect())
    }

    /// Distance to the first obstacle, wall or agent along a ray, if any.
    fn raycast(&self, origin: (f64, f64), direction: (f64, f64), max_dist: f64) -> PyResult<Option<f64>> {
        let dir = Vec2::new(direction.0, direction.1).try_normalize().ok_or_else(|| PyValueError::new_err("zero direction"))?;
        Ok(self.world.raycast(Vec2::new(origin.0, origin.1), dir, max_dist, CategoryMask::OBSTACLE | CategoryMask::AGENT).map(|h| h.distance))
    }

    fn line_of_sight(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        self.world.line_of_sight(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1))
    }

    /// Observation vector of `agent`; `kind` is core, hide, collect or curriculum.
    #[pyo3(signature = (agent, kind="core"))]
    fn observe(&self, agent: u32, kind: &str) -> PyResult<Vec<f32>> {
        let mut out = Vec::new();
        encode(observation_kind(kind)?, &self.world, AgentId(agent), &SensorConfig::default(), &mut out).map_err(py_err)?;
        Ok(out)
    }

    /// SHA-256 of the canonical world state, hex encoded.
    fn state_hash(&self) -> String {
        hex::encode(self.world.state_hash())
    }
}

/// Reset/step environment for one skill (`flee`, `advance`, `combat`,
/// `hide`, `collect`) or curriculum phase (`phase1` .. `phase5`).
#[pyclass(unsendable, name = "SkillEnv")]
struct PySkillEnv {
    env: SkillEnv,
}

#[pymethods]
impl PySkillEnv {
    #[new]
    #[pyo3(signature = (skill, desk=false))]
    fn new(skill: &str, desk: bool) -> PyResult<Self> {
        Ok(PySkillEnv { env: SkillEnv::new(skill_env_config(skill, desk)?).map_err(py_err)? })
    }

    #[getter]
    fn observation_width(&self) -> usize {
        self.env.observation_width()
    }

    #[getter]
    fn max_episode_steps(&self) -> u64 {
        self.env.config().max_episode_steps
    }

    fn reset(&mut self, seed: u64) -> PyResult<Vec<f32>> {
        self.env.reset(seed).map_err(py_err)
    }

    /// Returns `(observation, reward, done)`.
    #[pyo3(signature = (lateral, forward, shoot=false))]
    fn step(&mut self, lateral: f64, forward: f64, shoot: bool) -> PyResult<(Vec<f32>, f64, bool)> {
        let s = self.env.step(ActionCommand::new(lateral, forward, shoot)).map_err(py_err)?;
        Ok((s.observation, s.reward, s.done))
    }
}

/// Parses behavior-tree DSL and returns its canonical text.
#[pyfunction]
fn parse_tree(text: &str) -> PyResult<String> {
    parse_dsl(text).map(|t| t.to_dsl()).map_err(py_err)
}

/// Generalized advantage estimates and returns for one trajectory.
#[pyfunction]
#[pyo3(signature = (rewards, values, dones, last_value, gamma=0.99, lam=0.95))]
fn gae(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, last_value: f64, gamma: f64, lam: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(PyValueError::new_err("rewards, values and dones must have equal length"));
    }
    Ok(ppo::gae(&rewards, &values, &dones, last_value, gamma, lam))
}

fn agent(spec: &str) -> PyResult<AgentSpec> {
    AgentSpec::parse(spec).map_err(py_err)
}

/// Plays `episodes` matches of agent spec `a` against `b` in the evaluation arena.
#[pyfunction]
#[pyo3(signature = (a, b, episodes=100, seed=0))]
fn evaluate<'py>(py: Python<'py>, a: &str, b: &str, episodes: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = harness::evaluate(&agent(a)?, &agent(b)?, &ArenaConfig::evaluation(), episodes, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("agent", r.agent)?;
    d.set_item("opponent", r.opponent)?;
    d.set_item("episodes", r.episodes)?;
    d.set_item("wins", r.wins)?;
    d.set_item("losses", r.losses)?;
    d.set_item("unresolved", r.unresolved)?;
    d.set_item("win_rate", r.win_rate)?;
    d.set_item("mean_steps", r.mean_steps)?;
    d.set_item("mean_damage", r.mean_damage)?;
    d.set_item("restarts", r.restarts)?;
    Ok(d)
}

/// One match; returns winner (0, 1 or None), steps and the trace hash.
#[pyfunction]
#[pyo3(signature = (a, b, seed=0))]
fn run_match<'py>(py: Python<'py>, a: &str, b: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let m = harness::run_match(&agent(a)?, &agent(b)?, &ArenaConfig::evaluation(), seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("winner", m.winner)?;
    d.set_item("steps", m.steps)?;
    d.set_item("hits", (m.hits[0], m.hits[1]))?;
    d.set_item("trace_hash", m.trace_hash)?;
    Ok(d)
}

/// Trains a skill policy; writes checkpoints and the model into `out` when given.
#[pyfunction]
#[pyo3(signature = (skill, steps=None, seed=1, desk=true, out=None))]
fn train_skill<'py>(py: Python<'py>, skill: &str, steps: Option<u64>, seed: u64, desk: bool, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let env = skill_env_config(skill, desk)?;
    let mut cfg = if desk { PpoConfig::desk() } else { PpoConfig::default() };
    cfg.total_steps = steps.or(cfg.total_steps);
    let outcome = py.detach(|| ppo::train_skill(&env, &cfg, seed, out.as_deref())).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("batches", outcome.metrics.len())?;
    d.set_item("steps", outcome.metrics.last().map_or(0, |m| m.steps))?;
    d.set_item("reward_mean", outcome.metrics.iter().map(|m| m.reward_mean).collect::<Vec<_>>())?;
    d.set_item("params_hash", outcome.params.content_hash())?;
    d.set_item("model_path", outcome.model_path.map(|p| p.display().to_string()))?;
    Ok(d)
}

/// Scores a saved skill model (or a uniform-random actor when `model` is None).
#[pyfunction]
#[pyo3(signature = (skill, model=None, episodes=100, seed=0, desk=true))]
fn evaluate_skill<'py>(py: Python<'py>, skill: &str, model: Option<PathBuf>, episodes: usize, seed: u64, desk: bool) -> PyResult<Bound<'py, PyDict>> {
    let env = skill_env_config(skill, desk)?;
    let params = match model {
        Some(p) => Some(PolicyParams::load(&p, &env.network_spec()).map_err(py_err)?),
        None => None,
    };
    let actor = match &params {
        Some(params) => SkillActor::Policy { params, deterministic: true },
        None => SkillActor::UniformRandom,
    };
    let r = harness::evaluate_skill(&env, actor, episodes, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_length", r.mean_length)?;
    d.set_item("mean_reward", r.mean_reward)?;
    d.set_item("terminal_rate", r.terminal_rate)?;
    d.set_item("kill_rate", r.kill_rate)?;
    d.set_item("in_sight_rate", r.in_sight_rate)?;
    d.set_item("caught_rate", r.caught_rate)?;
    d.set_item("reload_rate", r.reload_rate)?;
    Ok(d)
}

/// Steps per second for a setting (`no-model` or an agent spec).
#[pyfunction]
#[pyo3(name = "bench", signature = (setting="bt", agents=1, steps=10_000, repeats=3, seed=1))]
fn bench_throughput<'py>(py: Python<'py>, setting: &str, agents: usize, steps: u64, repeats: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let kind = if setting == "no-model" { BenchAgent::NoModel } else { BenchAgent::Spec(agent(setting)?) };
    let r = py.detach(|| harness::bench_throughput(&kind, agents, steps, repeats, seed)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("setting", r.setting)?;
    d.set_item("agents", r.agents)?;
    d.set_item("mean", r.mean)?;
    d.set_item("std", r.std)?;
    d.set_item("rates", r.rates)?;
    Ok(d)
}

/// Writes a replayable match trace; returns its hash.
#[pyfunction]
#[pyo3(signature = (a, b, seed, path))]
fn trace_match(a: &str, b: &str, seed: u64, path: PathBuf) -> PyResult<String> {
    harness::trace_match(&agent(a)?, &agent(b)?, &ArenaConfig::evaluation(), seed, &path).map(|m| m.trace_hash).map_err(py_err)
}

/// Re-simulates a trace file; raises on any mismatch, returns the hash.
#[pyfunction]
fn verify_trace(path: PathBuf) -> PyResult<String> {
    harness::verify_trace(&path).map(|m| m.trace_hash).map_err(py_err)
}

/// Number of parameters of the network used for a skill.
#[pyfunction]
fn param_count(skill: &str) -> PyResult<usize> {
    Ok(if skill == "curriculum" { NetworkSpec::curriculum() } else { NetworkSpec::for_task(task(skill)?) }.param_count())
}

#[pymodule]
fn sbrl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PySkillEnv>()?;
    m.add_function(wrap_pyfunction!(parse_tree, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_match, m)?)?;
    m.add_function(wrap_pyfunction!(train_skill, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_skill, m)?)?;
    m.add_function(wrap_pyfunction!(bench_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(trace_match, m)?)?;
    m.add_function(wrap_pyfunction!(verify_trace, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    Ok(())
}
