//! Discrete-time, discrete-phase pulse-coupled oscillators with a quorum
//! threshold, plus an experiment harness for seeded parameter sweeps.
//!
//! Agents advance a cyclic clock by one tick per step, flash during the last
//! part of the cycle, and take one extra tick when strictly more than a
//! fraction `θ` of their neighbors are flashing as their own flash begins.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;

pub use engine::{init_state, init_state_explicit, simulate, simulate_from, step, NeighborReads, SimOptions, SwarmState, Trajectory, UpdateOrder};
pub use error::{Error, Result};
pub use graphs::{check_topology, degree_from_removal, generate_geometric, generate_k_regular, Provenance, Topology, TopologyReport};
pub use harness::{expand_grid, run_sweep, SweepSpec};
pub use metrics::{classify_success, max_amplitude, phase_clusters, success_fraction, RunRecord, SuccessFraction};
pub use model::{flash_start_phase, is_flashing, noisy_update, quorum_decision, ModelParams};
