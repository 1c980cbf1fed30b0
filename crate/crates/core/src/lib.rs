//! Simulator and solvers for cooperative service caching in user-centric
//! mobile edge computing networks.
//!
//! Each slot one typical user is served by a cluster of BSs that jointly
//! decode its uplink with a zero-forcing receiver. The cluster keeps a
//! probabilistic cache of services; a virtual queue enforces a long-run
//! budget on prefetch cost, and a consensus-sharing ADMM solver picks the
//! per-slot caching decision. Single-BS and Gibbs-sampling baselines share
//! the same channel and request streams.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod baselines;
pub mod config;
pub mod error;
pub mod io;
pub mod lyapunov;
pub mod phy;
pub mod rng;
pub mod service;
pub mod sim;

pub use config::{default_scenario, parse_config, parse_config_str, serialize_scenario, ConfigFile};
pub use error::{Error, Result};
pub use sim::{run_scenario, sweep, Algorithm, ClusterMode, RunOutput, RunSummary, Scenario, TraceRecord};
