//! Two-timescale cache-and-power control for cooperative MIMO video
//! streaming: numerics, closed-form controllers, optimizers, baselines,
//! a slot-level simulator and the brute-force verifiers.

pub mod baselines;
pub mod cache;
pub mod cache_opt;
pub mod channel;
pub mod error;
pub mod oracles;
pub mod power;
pub mod queue;
pub mod sim;
pub mod special;

pub use cache::{CacheVector, Urp};
pub use error::{Error, Result};
pub use power::PolicyTables;
pub use queue::{QueueVector, SystemConfig};
pub use sim::{MetricsRecord, Policy, SweepGrid, SweepPoint};
