//! Canonical world encoding used for determinism hashing and text traces.
//!
//! Field order is fixed; floats are written as their IEEE-754 bit patterns so
//! equal hashes mean bit-identical states.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::world::WorldState;

pub const TRACE_VERSION: u32 = 1;

impl WorldState {
    /// Appends the canonical little-endian encoding of this state.
    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
        out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        f(out, self.arena_side);
        out.extend_from_slice(&(self.agents.len() as u32).to_le_bytes());
        for a in &self.agents {
            out.extend_from_slice(&a.id.0.to_le_bytes());
            out.push(a.team);
            f(out, a.position.x);
            f(out, a.position.y);
            f(out, a.facing.x);
            f(out, a.facing.y);
            f(out, a.health);
            out.extend_from_slice(&a.ammo.to_le_bytes());
            out.extend_from_slice(&a.cooldown.to_le_bytes());
            f(out, a.health_history_min());
            out.extend_from_slice(&(a.health_history.len() as u32).to_le_bytes());
            f(out, a.damage_dealt);
            out.extend_from_slice(&a.target.map_or(-1i64, |t| t.0 as i64).to_le_bytes());
            f(out, a.speed);
            out.push(a.unlimited_ammo as u8);
            out.push(a.locked as u8);
        }
        out.extend_from_slice(&(self.projectiles.len() as u32).to_le_bytes());
        for p in &self.projectiles {
            f(out, p.position.x);
            f(out, p.position.y);
            f(out, p.velocity.x);
            f(out, p.velocity.y);
            out.extend_from_slice(&p.owner.0.to_le_bytes());
        }
        out.extend_from_slice(&(self.obstacles.len() as u32).to_le_bytes());
        for o in &self.obstacles {
            for v in [o.min.x, o.min.y, o.max.x, o.max.y] {
                f(out, v);
            }
        }
        out.extend_from_slice(&(self.ammo_stations.len() as u32).to_le_bytes());
        for s in &self.ammo_stations {
            f(out, s.position.x);
            f(out, s.position.y);
            out.extend_from_slice(&s.respawn_timer.to_le_bytes());
        }
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(256);
        self.write_canonical(&mut v);
        v
    }

    pub fn state_hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    /// One human-readable trace line. Floats use Rust's shortest round-trip
    /// formatting, so the line determines the printed fields exactly.
    pub fn trace_line(&self) -> String {
        let mut s = format!("s={}", self.step);
        for a in &self.agents {
            let _ = write!(
                s,
                " a{}={},{},{},{},{},{},{}",
                a.id.0, a.position.x, a.position.y, a.facing.x, a.facing.y, a.health, a.ammo, a.cooldown
            );
        }
        let _ = write!(s, " p={} h={}", self.projectiles.len(), &hex::encode(self.state_hash())[..16]);
        s
    }
}

/// Running digest over a sequence of world states.
#[derive(Clone, Default)]
pub struct TraceHasher {
    hasher: Sha256,
    buf: Vec<u8>,
    states: u64,
}

impl TraceHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, world: &WorldState) {
        self.buf.clear();
        world.write_canonical(&mut self.buf);
        self.hasher.update(&self.buf);
        self.states += 1;
    }

    pub fn states(&self) -> u64 {
        self.states
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}
