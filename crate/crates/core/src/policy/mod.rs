//! Skill policies: network specification, parameters, forward/backward and
//! the action distribution.

pub mod dist;
pub mod net;
pub mod params;
pub mod runner;
pub mod spec;

pub use dist::{sigmoid, ActionDistribution, DistGrad, SampledAction};
pub use net::{Dense, ForwardCache, Net, OutputGrads, Outputs, Real, LOG_STD_MAX, LOG_STD_MIN};
pub use params::{load_params, save_params, sidecar_path, ModelMeta, PolicyParams};
pub use runner::{rows_to_array, PolicyOutput, PolicyRunner};
pub use spec::{observation_kind, AttentionSpec, Layout, LayoutEntry, NetworkSpec, MOVE_DIMS, DEFAULT_ATTENTION};
