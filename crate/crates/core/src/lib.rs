//! Deep reinforcement learning for whole-building HVAC setpoint control.
//!
//! The crate bundles a multi-zone RC thermal simulator driven by EPW weather,
//! a Gym-style environment with a soft comfort penalty, PPO and DDPG learners
//! written against a small dense-network core, a threaded rollout runtime
//! with a lockstep simulator protocol, and an experiment driver.

pub mod baseline;
pub mod config;
pub mod building;
pub mod env;
pub mod experiment;
pub mod policy;
pub mod runtime;
pub mod weather;
