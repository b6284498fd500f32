//! Simulation and bounded verification of a consistency protocol for
//! exchanging per-link channel-hopping functions in IEEE 802.15.4 TSCH.
//!
//! The crate is organised bottom-up:
//!
//! - [`hopping`]: ASN, slotframe, cells and the hopping computation.
//! - [`ie`]: wire codec for the hopping-function information element.
//! - [`fsm`]: sender/receiver state machines and exchange timestamps.
//! - [`medium`]: per-attempt frame/ACK loss model.
//! - [`energy`]: radio energy costs and per-node ledgers.
//! - [`metrics`]: exact slot-resolution histograms.
//! - [`config`] and [`simulator`]: scenarios, runs and paired sweeps.
//! - [`verifier`]: exhaustive enumeration of loss patterns and random soaks.
//! - [`report`]: CSV rendering of run results.

pub mod config;
pub mod energy;
pub mod fsm;
pub mod hopping;
pub mod ie;
pub mod medium;
pub mod metrics;
pub mod report;
pub mod simulator;
pub mod verifier;

pub use config::{ScenarioConfig, SECONDS_PER_YEAR};
pub use simulator::{paired_sweep, placement_experiment, run, SimError, SimReport};
