//! Time-stepped simulation of drone swarms covering a rectangular field
//! under five distributed mobility models (random walk, distributed
//! pheromone repel, connectivity-based, k-hop clustering and connected
//! coverage), with per-second coverage, connectivity and message metrics.
//!
//! Runs are pure functions of their [`engine::RunConfig`]; the
//! [`harness`] sweeps models, swarm sizes and seeds and writes one table per
//! figure panel.

pub mod cli;
pub mod engine;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod mobility;
pub mod pheromone;
pub mod radio;

pub use engine::{run, RunConfig, World};
pub use harness::{run_experiment, ExperimentConfig};
pub use metrics::MetricsRecord;
pub use mobility::ModelKind;
