//! Command implementations behind the `capscan` binary: training runs and
//! learning-rate sweeps, checkpoint evaluation, episode replay, manual vs
//! trained-policy comparison, and the teleoperation server.

pub mod compare;
pub mod config;
pub mod eval;
pub mod replay;
pub mod serve;
pub mod train;

pub use config::RunConfig;
