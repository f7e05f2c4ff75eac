//! Simulation core for magnetically actuated capsule coverage scanning.

pub mod dynamics;
pub mod env;
pub mod error;
pub mod geometry;
