//! Peg-in-hole policy transfer lab.
//!
//! A point-peg contact simulator, a hybrid motion-force controller whose gains
//! are chosen by a soft actor-critic policy, and a harness that trains, moves
//! and fine-tunes policies between two robot embodiments.

pub mod action;
pub mod checkpoint;
pub mod config;
pub mod control;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod report;
pub mod sac;
pub mod sim;
pub mod task;
pub mod train;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
