//! Shared generators and oracles, also pulled into the acceptance gate.

pub mod dtn_instances;
pub mod dtn_oracle;
pub mod grids;
pub mod messages;
pub mod trajectories;
