//! Evaluation: head-to-head matches, skill scoring, throughput, exports.

mod agents;
mod bench;
mod export;
mod matches;
mod skill_eval;
mod trace;

pub use agents::{AgentKind, AgentSpec};
pub use bench::{bench_arena, bench_throughput, clearly_faster, mean_std, pooled_std, write_bench_csv, BenchAgent, BenchResult};
pub use export::{export_histograms, export_sample_histograms, histogram, histogram_svg, length_samples, load_lengths_csv, write_lengths_csv, LengthSample, DEFAULT_BINS, LENGTHS_FILE};
pub use matches::{evaluate, match_arena, run_match, run_match_with, summary_table, write_report_csv, EvalReport, MatchResult, StepView, MAX_ATTEMPTS, MAX_MATCH_STEPS};
pub use skill_eval::{evaluate_skill, SkillActor, SkillEvalReport};
pub use trace::{render_trace, trace_match, verify_trace, verify_trace_text, TRACE_MAGIC};
