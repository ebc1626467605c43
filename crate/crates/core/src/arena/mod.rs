//! Deterministic fixed-timestep 2D arena: movement, projectiles, damage, ammo,
//! raycasts and line of sight.

mod config;
mod query;
mod trace;
mod world;

pub use config::{AgentSetup, ArenaConfig, RandomObstacles, SpawnRules};
pub use query::{CategoryMask, HitKind, RayHit};
pub use trace::{TraceHasher, TRACE_VERSION};
pub use world::{
    place_agents, spawn_episode, ActionCommand, AgentEvents, AgentId, AgentState, AmmoStation, Physics, Pickup, Projectile,
    StepEvents, WorldState,
};

#[cfg(test)]
mod tests;
