//! From-scratch function approximation and the PPO and SAC trainers for
//! the capsule coverage environment.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod gae;
pub mod gaussian;
pub mod gradcheck;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod replay;
pub mod sac;
pub mod schedule;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::LearnError;
pub use train::{train, Algo, TrainConfig, TrainStats};
