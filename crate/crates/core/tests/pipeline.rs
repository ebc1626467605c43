use sbrl_core::arena::{spawn_episode, ActionCommand, AgentId, ArenaConfig};
use sbrl_core::btree::{parse_tree, TaskKind, DEFAULT_TREE};
use sbrl_core::harness::{evaluate, render_trace, run_match, verify_trace_text, AgentSpec};
use sbrl_core::policy::PolicyParams;
use sbrl_core::ppo::{train_skill, PpoConfig, MODEL_FILE};
use sbrl_core::skills::{curriculum_phases, run_curriculum, EnvConfig};

fn tiny_ppo(steps: u64) -> PpoConfig {
    let mut c = PpoConfig::desk();
    c.train_batch = 1000;
    c.epochs = 1;
    c.total_steps = Some(steps);
    c
}

#[test]
fn same_seed_same_world_after_many_steps() {
    let cfg = ArenaConfig::evaluation();
    let run = || {
        let mut w = spawn_episode(&cfg, 9).unwrap();
        for i in 0..300 {
            let turn = ((i % 7) as f64 - 3.0) / 3.0;
            w.step(&[(AgentId(0), ActionCommand::new(turn, 1.0, i % 5 == 0)), (AgentId(1), ActionCommand::new(-turn, 0.5, false))]).unwrap();
        }
        w.state_hash()
    };
    assert_eq!(run(), run());
}

#[test]
fn default_tree_round_trips_through_dsl() {
    let t = parse_tree(DEFAULT_TREE).unwrap();
    let again = parse_tree(&t.to_dsl()).unwrap();
    assert_eq!(t.to_dsl(), again.to_dsl());
}

#[test]
fn trace_text_verifies_and_detects_edits() {
    let (text, m) = render_trace(&AgentSpec::bt(), &AgentSpec::aggressive(), &ArenaConfig::evaluation(), 5).unwrap();
    assert_eq!(verify_trace_text(&text).unwrap().trace_hash, m.trace_hash);
    let edited = text.replacen("\na #1 ", "\na #1 0.25 ", 1);
    assert_ne!(edited, text);
    assert!(verify_trace_text(&edited).is_err());
}

#[test]
fn evaluation_is_reproducible() {
    let arena = ArenaConfig::evaluation();
    let a = evaluate(&AgentSpec::bt(), &AgentSpec::aggressive(), &arena, 8, 3).unwrap();
    let b = evaluate(&AgentSpec::bt(), &AgentSpec::aggressive(), &arena, 8, 3).unwrap();
    assert_eq!((a.wins, a.losses, a.win_lengths.clone()), (b.wins, b.losses, b.win_lengths.clone()));
    let m = run_match(&AgentSpec::bt(), &AgentSpec::static_npc(), &arena, 3).unwrap();
    assert_eq!(m.winner, Some(0));
}

#[test]
fn trained_model_loads_into_hybrid_agent() {
    let dir = tempfile::tempdir().unwrap();
    let env = EnvConfig::desk_skill(TaskKind::Combat);
    let out = train_skill(&env, &tiny_ppo(1000), 4, Some(dir.path())).unwrap();
    let loaded = PolicyParams::load(&dir.path().join(MODEL_FILE), &env.network_spec()).unwrap();
    assert_eq!(loaded.content_hash(), out.params.content_hash());
    let hybrid = AgentSpec::hybrid(vec![(TaskKind::Combat, loaded)]);
    let m = run_match(&hybrid, &AgentSpec::static_npc(), &ArenaConfig::evaluation(), 1).unwrap();
    assert!(m.steps > 0);
}

#[test]
fn curriculum_carries_params_across_phases() {
    let phases = curriculum_phases();
    let out = run_curriculum(&phases[..2], &tiny_ppo(1000), 2, None).unwrap();
    assert_eq!(out.phase_params.len(), 2);
    assert_eq!(out.params.content_hash(), out.phase_params[1].content_hash());
    assert_ne!(out.phase_params[0].content_hash(), out.phase_params[1].content_hash());
}
