//! Replayable text traces of a match and their verification.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agents::AgentSpec;
use super::matches::{run_match_with, MatchResult};
use crate::arena::ArenaConfig;
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &str = "# sbrl match trace v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceHeader {
    a: String,
    b: String,
    seed: u64,
    arena: ArenaConfig,
}

/// Full trace text: header, one world line and per-agent tree lines per
/// step, and the final result.
pub fn render_trace(a: &AgentSpec, b: &AgentSpec, arena: &ArenaConfig, seed: u64) -> Result<(String, MatchResult)> {
    let header = TraceHeader { a: a.label.clone(), b: b.label.clone(), seed, arena: arena.clone() };
    let mut text = format!("{TRACE_MAGIC}\nheader {}\n", serde_json::to_string(&header)?);
    let specs = [a, b];
    let result = run_match_with(a, b, arena, seed, |v| {
        let _ = writeln!(text, "w {}", v.world.trace_line());
        for (i, t) in v.traces.iter().enumerate() {
            if let (Some(t), Some(tree)) = (t, &specs[i].tree) {
                let _ = writeln!(text, "t{i} {}", t.to_line(tree));
            }
        }
        for (id, act) in v.actions {
            let _ = writeln!(text, "a {} {} {} {}", id, act.lateral, act.forward, act.shoot as u8);
        }
    })?;
    let _ = writeln!(text, "result {}", serde_json::to_string(&result)?);
    Ok((text, result))
}

/// Simulates the match and writes its trace to `path`.
pub fn trace_match(a: &AgentSpec, b: &AgentSpec, arena: &ArenaConfig, seed: u64, path: &Path) -> Result<MatchResult> {
    let (text, result) = render_trace(a, b, arena, seed)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(result)
}

/// Re-simulates a trace from its header and checks every line. Agents are
/// rebuilt with [`AgentSpec::parse`] from the recorded labels.
pub fn verify_trace(path: &Path) -> Result<MatchResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    verify_trace_text(&text)
}

pub fn verify_trace_text(text: &str) -> Result<MatchResult> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_MAGIC) {
        return Err(Error::TraceMismatch("missing trace header".into()));
    }
    let header_line = lines.next().and_then(|l| l.strip_prefix("header ")).ok_or_else(|| Error::TraceMismatch("missing header line".into()))?;
    let h: TraceHeader = serde_json::from_str(header_line).map_err(|e| Error::TraceMismatch(format!("bad header: {e}")))?;
    let (a, b) = (AgentSpec::parse(&h.a)?, AgentSpec::parse(&h.b)?);
    let (expect, result) = render_trace(&a, &b, &h.arena, h.seed)?;
    if let Some((i, (got, want))) = text.lines().zip(expect.lines()).enumerate().find(|(_, (g, w))| g != w) {
        return Err(Error::TraceMismatch(format!("line {}: recorded `{}`, replay gives `{}`", i + 1, clip(got), clip(want))));
    }
    let (n_got, n_want) = (text.lines().count(), expect.lines().count());
    if n_got != n_want {
        return Err(Error::TraceMismatch(format!("trace has {n_got} lines, replay has {n_want}")));
    }
    Ok(result)
}

fn clip(s: &str) -> &str {
    let end = s.char_indices().nth(120).map_or(s.len(), |(i, _)| i);
    &s[..end]
}
