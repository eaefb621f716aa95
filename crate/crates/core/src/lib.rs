//! Task-based runtime with CPU-count prediction.

pub mod arbiter;
pub mod bench;
pub mod cpu_manager;
pub mod energy;
pub mod events;
pub mod harness;
pub mod monitoring;
pub mod predictor;
pub mod real;
pub mod sim;
pub mod task;
pub mod validate;
pub mod workload;
