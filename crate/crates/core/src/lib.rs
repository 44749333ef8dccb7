//! Deterministic discrete-event simulator for mix networks.
//!
//! A run builds a [`topology::Topology`] of [`mixing::MixNode`]s, drives
//! Poisson clients and optional cover traffic through them on an integer
//! nanosecond clock, and measures what a global passive adversary learns:
//! entropy of the target's linkage distribution, per-round sender
//! unlinkability leakage, plus latency and bandwidth overhead.
//!
//! Adversary mass is generic over [`scalar::Mass`]; the aliases below pick
//! `f64`, and [`ExactSimulation`] uses exact rationals.
//!
//! ```
//! use mixsim::harness::{run_point, ScenarioConfig};
//!
//! let cfg = ScenarioConfig::from_json(r#"{
//!     "topology": {"family": "cascade", "total_nodes": 1},
//!     "strategy": {"discipline": "batch", "batch_size": 10},
//!     "clients":  {"num_clients": 20},
//!     "run": {"horizon_s": 30, "warmup_s": 2, "seeds": [7], "metric": "entropy"}
//! }"#).unwrap();
//! let point = run_point(&cfg.resolve(None).unwrap(), None, 1).unwrap();
//! assert!((point.entropy_mean().unwrap() - 10f64.log2()).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mixing;
pub mod scalar;
pub mod sim;
pub mod topology;
pub mod traffic;

pub use engine::{EventQueue, RngStream, SimTime};
pub use error::{ConfigError, Error, Result, SimError};
pub use scalar::{ExactMass, Mass, Masses};

pub type Simulation = sim::Simulation<f64>;
pub type ExactSimulation = sim::Simulation<ExactMass>;
pub type Packet = mixing::Packet<f64>;
pub type MixNode = mixing::MixNode<f64>;
pub type MemorylessPool = mixing::MemorylessPool<f64>;
pub type ExactPool = mixing::MemorylessPool<ExactMass>;
pub type LinkageDistribution = metrics::LinkageDistribution<f64>;
pub type Ledger = metrics::MetricsLedger;
