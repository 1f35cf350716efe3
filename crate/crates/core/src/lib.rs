//! Simulated rod-like soft arm, a fixed-point reaching environment, and two
//! reinforcement-learning controllers for it: a centralised Gaussian PPO actor
//! over the global state, and per-section MAPPO actors with learned mean-field
//! communication and a shared centralised critic.
//!
//! The crate is organised bottom-up:
//!
//! - [`rod`]: damped stretch/bend rod with a fixed-step integrator.
//! - [`env`]: episodic reaching task with observation, reward and scenario contracts.
//! - [`nn`] and [`policy`]: hand-differentiated MLPs and both policy architectures.
//! - [`trainer`]: rollouts, GAE, PPO updates, Adam, training loop.
//! - [`eval`] and [`report`]: scenario suites and table output.
//! - [`config`] and [`checkpoint`]: versioned run configs and weight files.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod report;
pub mod rod;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
