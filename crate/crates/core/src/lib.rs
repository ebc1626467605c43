pub mod arena;
pub mod btree;
pub mod controller;
pub mod error;
pub mod geom;
pub mod harness;
pub mod policy;
pub mod ppo;
pub mod sensors;
pub mod skills;

pub use error::{Error, Result};
