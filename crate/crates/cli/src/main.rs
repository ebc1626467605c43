mod overrides;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use overrides::Override;
use sbrl_core::arena::ArenaConfig;
use sbrl_core::btree::TaskKind;
use sbrl_core::harness::{
    bench_throughput, evaluate, export_histograms, export_sample_histograms, load_lengths_csv, summary_table, trace_match, verify_trace,
    write_bench_csv, write_report_csv, AgentSpec, BenchAgent, LENGTHS_FILE,
};
use sbrl_core::ppo::{PpoConfig, Trainer, MODEL_FILE, STATE_FILE};
use sbrl_core::skills::{curriculum_phases, run_curriculum, EnvConfig};

/// Default parent directory for run outputs when `--out` is not given.
const OUT_ROOT_VAR: &str = "SBRL_OUT_DIR";
const RESOLVED_FILE: &str = "resolved.toml";

#[derive(Parser, Debug)]
#[command(name = "sbrl", version, about = "Arena simulator, behavior trees with learned leaves, and PPO training")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; defaults to $SBRL_OUT_DIR/<run name> (or runs/<run name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after config files. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one skill policy with PPO.
    TrainSkill {
        /// flee, advance, combat, hide or collect.
        skill: String,
        /// Environment TOML; defaults to the bundled config for the skill.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trainer TOML; defaults to the bundled PPO config.
        #[arg(long)]
        ppo_config: Option<PathBuf>,
        /// Use the small-arena environment and desk trainer settings.
        #[arg(long)]
        desk: bool,
        /// Environment step budget (overrides the config's).
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train one policy through the curriculum phases in order.
    TrainCurriculum {
        /// Phases to run, e.g. 1,2,3.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u8, 2, 3, 4, 5])]
        phases: Vec<u8>,
        #[arg(long)]
        ppo_config: Option<PathBuf>,
        #[arg(long)]
        desk: bool,
        /// Step budget per phase.
        #[arg(long)]
        steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Play agents against each other and write a win-rate report.
    Eval {
        /// Agent(s) under test, e.g. bt, hybrid:combat=model.sbrl, tree file.
        #[arg(long = "a", required = true, num_args = 1..)]
        a: Vec<String>,
        /// Opponent(s), e.g. static or aggressive.
        #[arg(long = "b", required = true, num_args = 1..)]
        b: Vec<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Arena TOML; defaults to the evaluation arena.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Measure simulation throughput in steps per second.
    Bench {
        /// Agent counts to measure.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 10])]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// no-model or any agent spec accepted by eval.
        #[arg(long, value_delimiter = ',', default_values_t = ["no-model".to_string(), "bt".into(), "hybrid-init".into(), "curriculum-init".into()])]
        settings: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Redraw episode-length histograms from an eval directory or CSV.
    Export {
        /// Eval output directory or episode_lengths.csv.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, default_value_t = sbrl_core::harness::DEFAULT_BINS)]
        bins: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Record a replayable trace of one match.
    Trace {
        #[arg(long = "a", default_value = "bt")]
        a: String,
        #[arg(long = "b", default_value = "static")]
        b: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-simulate a trace file and check it line by line.
    Verify { trace: PathBuf },
}

/// Written beside every run's outputs.
#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arena: Option<&'a ArenaConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ppo: Option<&'a PpoConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    env: Vec<&'a EnvConfig>,
}

impl<'a> Resolved<'a> {
    fn new(command: &'a str, seed: u64) -> Self {
        Resolved { command, seed, detail: None, arena: None, ppo: None, env: vec![] }
    }

    fn detail(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.detail.get_or_insert_with(Default::default).insert(key.to_string(), value.into());
        self
    }

    fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_FILE);
        std::fs::write(&path, toml::to_string(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

fn out_dir(common: &Common, name: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("{name}-seed{}", common.seed))
    })
}

fn parse_overrides(common: &Common, allowed: &[&str]) -> Result<Vec<Override>> {
    let o = common.overrides.iter().map(|s| overrides::parse(s)).collect::<Result<Vec<_>>>()?;
    overrides::check_sections(&o, allowed)?;
    Ok(o)
}

fn parse_skill(name: &str) -> Result<TaskKind> {
    TaskKind::from_name(name).ok_or_else(|| anyhow::anyhow!(sbrl_core::Error::InvalidConfig(format!("unknown skill {name}"))))
}

fn load_ppo(path: Option<&Path>, desk: bool, steps: Option<u64>, o: &[Override]) -> Result<PpoConfig> {
    let mut cfg = match path {
        Some(p) => PpoConfig::load(p)?,
        None if desk => PpoConfig::desk(),
        None => PpoConfig::default(),
    };
    if steps.is_some() {
        cfg.total_steps = steps;
    }
    let cfg: PpoConfig = overrides::apply(&cfg, "ppo", o)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_arena(path: Option<&Path>, o: &[Override]) -> Result<ArenaConfig> {
    let base = match path {
        Some(p) => ArenaConfig::load(p)?,
        None => ArenaConfig::evaluation(),
    };
    let cfg: ArenaConfig = overrides::apply(&base, "arena", o)?;
    cfg.validate()?;
    Ok(cfg)
}

fn train_skill(
    skill: &str,
    config: Option<&Path>,
    ppo_config: Option<&Path>,
    desk: bool,
    steps: Option<u64>,
    resume: bool,
    common: &Common,
) -> Result<()> {
    let task = parse_skill(skill)?;
    let o = parse_overrides(common, &["env", "ppo"])?;
    let out = out_dir(common, &format!("skill-{}", task.name()));
    let mut trainer = if resume && out.join(STATE_FILE).is_file() {
        if !o.is_empty() || config.is_some() || ppo_config.is_some() {
            bail!("--resume continues with the checkpointed configs; drop --config, --ppo-config and --override");
        }
        Trainer::resume(&out)?
    } else {
        let env = match config {
            Some(p) => EnvConfig::load(p)?,
            None if desk => EnvConfig::desk_skill(task),
            None => EnvConfig::skill(task),
        };
        let env: EnvConfig = overrides::apply(&env, "env", &o)?;
        env.validate()?;
        let ppo = load_ppo(ppo_config, desk, steps, &o)?;
        Trainer::new(env, ppo, common.seed, None)?
    };
    let mut resolved = Resolved::new("train-skill", common.seed).detail("skill", task.name());
    resolved.ppo = Some(trainer.config());
    resolved.env = vec![trainer.env_config()];
    resolved.write(&out)?;
    let records = trainer.run(Some(&out), None)?;
    let last = records.last();
    println!(
        "trained {} for {} steps ({} batches this run); last reward mean {}; outputs in {}",
        task.name(),
        trainer.steps(),
        records.len(),
        last.and_then(|r| r.reward_mean).map_or("n/a".into(), |r| format!("{r:.4}")),
        out.display()
    );
    Ok(())
}

fn train_curriculum(phases: &[u8], ppo_config: Option<&Path>, desk: bool, steps: Option<u64>, common: &Common) -> Result<()> {
    let o = parse_overrides(common, &["env", "ppo"])?;
    let all = curriculum_phases();
    let mut envs = Vec::new();
    for &p in phases {
        let env = all.get((p as usize).wrapping_sub(1)).cloned().ok_or_else(|| sbrl_core::Error::InvalidConfig(format!("no curriculum phase {p}")))?;
        let env: EnvConfig = overrides::apply(&env, "env", &o)?;
        env.validate()?;
        envs.push(env);
    }
    let ppo = load_ppo(ppo_config, desk, steps, &o)?;
    let out = out_dir(common, "curriculum");
    let mut resolved = Resolved::new("train-curriculum", common.seed).detail("phases", phases.iter().map(|&p| p as i64).collect::<Vec<_>>());
    resolved.ppo = Some(&ppo);
    resolved.env = envs.iter().collect();
    resolved.write(&out)?;
    let outcome = run_curriculum(&envs, &ppo, common.seed, Some(&out))?;
    println!("trained curriculum phases {:?} ({} batches); model {}", phases, outcome.metrics.len(), out.join(MODEL_FILE).display());
    Ok(())
}

fn parse_agents(specs: &[String]) -> Result<Vec<AgentSpec>> {
    specs.iter().map(|s| AgentSpec::parse(s).with_context(|| format!("agent `{s}`"))).collect()
}

fn eval(a: &[String], b: &[String], episodes: usize, config: Option<&Path>, common: &Common) -> Result<()> {
    let o = parse_overrides(common, &["arena"])?;
    let arena = load_arena(config, &o)?;
    let (agents, opponents) = (parse_agents(a)?, parse_agents(b)?);
    let out = out_dir(common, "eval");
    let mut resolved = Resolved::new("eval", common.seed)
        .detail("a", a.to_vec())
        .detail("b", b.to_vec())
        .detail("episodes", episodes as i64);
    resolved.arena = Some(&arena);
    resolved.write(&out)?;
    let mut reports = Vec::new();
    for x in &agents {
        for y in &opponents {
            reports.push(evaluate(x, y, &arena, episodes, common.seed)?);
        }
    }
    write_report_csv(&reports, &out.join("eval.csv"))?;
    export_histograms(&reports, &out)?;
    print!("{}", summary_table(&reports));
    println!("report: {}", out.join("eval.csv").display());
    Ok(())
}

fn bench(agents: &[usize], steps: u64, repeats: usize, settings: &[String], common: &Common) -> Result<()> {
    parse_overrides(common, &[])?;
    let kinds = settings
        .iter()
        .map(|s| if s == "no-model" { Ok(BenchAgent::NoModel) } else { AgentSpec::parse(s).map(BenchAgent::Spec).with_context(|| format!("setting `{s}`")) })
        .collect::<Result<Vec<_>>>()?;
    let out = out_dir(common, "bench");
    Resolved::new("bench", common.seed)
        .detail("agents", agents.iter().map(|&n| n as i64).collect::<Vec<_>>())
        .detail("steps", steps as i64)
        .detail("repeats", repeats as i64)
        .detail("settings", settings.to_vec())
        .write(&out)?;
    let mut results = Vec::new();
    for k in &kinds {
        for &n in agents {
            let r = bench_throughput(k, n, steps, repeats, common.seed)?;
            println!("{:<16} {:>3} agents {:>12.0} ± {:.0} steps/s", r.setting, r.agents, r.mean, r.std);
            results.push(r);
        }
    }
    write_bench_csv(&results, &out.join("bench.csv"))?;
    println!("report: {}", out.join("bench.csv").display());
    Ok(())
}

fn export(from: &Path, bins: usize, common: &Common) -> Result<()> {
    parse_overrides(common, &[])?;
    let csv = if from.is_dir() { from.join(LENGTHS_FILE) } else { from.to_path_buf() };
    let samples = load_lengths_csv(&csv)?;
    let out = common.out.clone().unwrap_or_else(|| csv.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    for p in export_sample_histograms(&samples, &out, bins)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn trace(a: &str, b: &str, config: Option<&Path>, common: &Common) -> Result<()> {
    let o = parse_overrides(common, &["arena"])?;
    let arena = load_arena(config, &o)?;
    let (x, y) = (AgentSpec::parse(a)?, AgentSpec::parse(b)?);
    let file = match &common.out {
        Some(p) if p.extension().is_some() => p.clone(),
        _ => out_dir(common, "trace").join("match.trace"),
    };
    let dir = file.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut resolved = Resolved::new("trace", common.seed).detail("a", a).detail("b", b);
    resolved.arena = Some(&arena);
    resolved.write(&dir)?;
    let r = trace_match(&x, &y, &arena, common.seed, &file)?;
    println!(
        "winner {} after {} steps; trace hash {}; trace {}",
        r.winner.map_or("none".into(), |w| if w == 0 { a.to_string() } else { b.to_string() }),
        r.steps,
        r.trace_hash,
        file.display()
    );
    Ok(())
}

fn verify(path: &Path) -> Result<()> {
    let r = verify_trace(path)?;
    println!("verified {} steps; trace hash {}", r.steps, r.trace_hash);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainSkill { skill, config, ppo_config, desk, steps, resume, common } => {
            train_skill(skill, config.as_deref(), ppo_config.as_deref(), *desk, *steps, *resume, common)
        }
        Command::TrainCurriculum { phases, ppo_config, desk, steps, common } => train_curriculum(phases, ppo_config.as_deref(), *desk, *steps, common),
        Command::Eval { a, b, episodes, config, common } => eval(a, b, *episodes, config.as_deref(), common),
        Command::Bench { agents, steps, repeats, settings, common } => bench(agents, *steps, *repeats, settings, common),
        Command::Export { from, bins, common } => export(from, *bins, common),
        Command::Trace { a, b, config, common } => trace(a, b, config.as_deref(), common),
        Command::Verify { trace } => verify(trace),
    }
}

/// Exit status and label for an error.
fn category(e: &anyhow::Error) -> (u8, &'static str) {
    use sbrl_core::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::TraceMismatch(_)) => (5, "verification"),
        Some(E::Io { .. } | E::Csv(_) | E::Json(_) | E::CorruptFile(_)) => (4, "io"),
        Some(E::InvalidConfig(_) | E::Parse { .. } | E::Toml(_) | E::SpecMismatch { .. } | E::WidthMismatch { .. } | E::SpawnFailed { .. }) => (3, "config"),
        Some(E::NonFiniteLoss { .. }) => (6, "training"),
        Some(_) => (1, "runtime"),
        None if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) => (4, "io"),
        None => (3, "config"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" })).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, label) = category(&e);
            eprintln!("error[{label}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
