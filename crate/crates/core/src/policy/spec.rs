use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::btree::TaskKind;
use crate::sensors::ObservationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub dim: usize,
    pub max_seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub depth: usize,
    pub width: usize,
    pub attention: Option<AttentionSpec>,
    /// Bernoulli shoot head alongside the 2-d movement Gaussian.
    pub shoot: bool,
}

pub const MOVE_DIMS: usize = 2;
pub const DEFAULT_ATTENTION: AttentionSpec = AttentionSpec { dim: 60, max_seq: 20 };

impl NetworkSpec {
    /// Network for a skill model: Combat is a small MLP with a shoot head, the
    /// movement skills are wider and attend over recent observations.
    pub fn for_task(task: TaskKind) -> NetworkSpec {
        let input = observation_kind(task).width();
        match task {
            TaskKind::Combat => NetworkSpec { input, depth: 2, width: 64, attention: None, shoot: true },
            _ => NetworkSpec { input, depth: 2, width: 128, attention: Some(DEFAULT_ATTENTION), shoot: false },
        }
    }

    pub fn curriculum() -> NetworkSpec {
        NetworkSpec {
            input: ObservationKind::Curriculum.width(),
            depth: 2,
            width: 128,
            attention: Some(DEFAULT_ATTENTION),
            shoot: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input == 0 || self.depth == 0 || self.width == 0 {
            return Err("input, depth and width must be positive".into());
        }
        if let Some(a) = self.attention {
            if a.dim == 0 || a.max_seq == 0 {
                return Err("attention dim and max_seq must be positive".into());
            }
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        self.width + self.attention.map_or(0, |a| a.dim)
    }

    /// Number of observations the policy looks at per decision.
    pub fn history_len(&self) -> usize {
        self.attention.map_or(1, |a| a.max_seq)
    }

    pub fn layout(&self) -> Layout {
        let mut l = Layout::default();
        let mut fan_in = self.input;
        for i in 0..self.depth {
            l.push(format!("enc{}.w", i), self.width, fan_in);
            l.push(format!("enc{}.b", i), self.width, 1);
            fan_in = self.width;
        }
        if let Some(a) = self.attention {
            for p in ["q", "k", "v"] {
                l.push(format!("attn.{}.w", p), a.dim, self.width);
                l.push(format!("attn.{}.b", p), a.dim, 1);
            }
        }
        let f = self.feature_width();
        l.push("mean.w".into(), MOVE_DIMS, f);
        l.push("mean.b".into(), MOVE_DIMS, 1);
        l.push("value.w".into(), 1, f);
        l.push("value.b".into(), 1, 1);
        if self.shoot {
            l.push("shoot.w".into(), 1, f);
            l.push("shoot.b".into(), 1, 1);
        }
        l.push("log_std".into(), MOVE_DIMS, 1);
        l
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    /// First 8 bytes (little-endian) of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let d = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

pub fn observation_kind(task: TaskKind) -> ObservationKind {
    match task {
        TaskKind::Hide => ObservationKind::Hide,
        TaskKind::Collect => ObservationKind::Collect,
        _ => ObservationKind::Core,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named row-major blocks of the flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl Layout {
    fn push(&mut self, name: String, rows: usize, cols: usize) {
        self.entries.push(LayoutEntry { name, rows, cols, offset: self.total });
        self.total += rows * cols;
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skill_specs() {
        let c = NetworkSpec::for_task(TaskKind::Combat);
        assert_eq!((c.depth, c.width, c.attention, c.shoot, c.input), (2, 64, None, true, 148));
        for t in [TaskKind::Flee, TaskKind::Search, TaskKind::Hide, TaskKind::Collect] {
            let s = NetworkSpec::for_task(t);
            assert_eq!((s.depth, s.width), (2, 128));
            assert_eq!(s.attention, Some(AttentionSpec { dim: 60, max_seq: 20 }));
            assert!(!s.shoot);
        }
        assert_eq!(NetworkSpec::for_task(TaskKind::Hide).input, 150);
        assert_eq!(NetworkSpec::for_task(TaskKind::Collect).input, 151);
        assert_eq!(NetworkSpec::curriculum().input, 153);
    }

    #[test]
    fn combat_param_count() {
        let c = NetworkSpec::for_task(TaskKind::Combat);
        let expected = 148 * 64 + 64 + 64 * 64 + 64 + 2 * 64 + 2 + 64 + 1 + 64 + 1 + 2;
        assert_eq!(c.param_count(), expected);
        let l = c.layout();
        assert_eq!(l.entries.last().unwrap().name, "log_std");
        assert!(l.entries.windows(2).all(|w| w[0].offset + w[0].len() == w[1].offset));
    }

    #[test]
    fn hashes_differ_between_specs() {
        assert_ne!(NetworkSpec::for_task(TaskKind::Combat).hash(), NetworkSpec::for_task(TaskKind::Hide).hash());
        assert_eq!(NetworkSpec::curriculum().hash(), NetworkSpec::curriculum().hash());
    }
}
