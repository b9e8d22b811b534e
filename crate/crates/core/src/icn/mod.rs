//! Intermittently connected networks: clusters joined by mobiles, routed by
//! plain back-pressure, BP with source routing, or two-scale BP with rate control.

mod engine;
mod markov;
pub mod ops;
mod scenario;

pub use engine::{FlowKind, FlowStats, IcnEngine, IcnFlow, IcnRun, LocalityStats};
pub use markov::{stationary_distribution, MarkovMobile, MobilityModel};
pub use ops::{
    advertise_gateway_queue, bpsr_delay_bounds, destination_gateway_release, exchange_commodity,
    loop_prevention_filter, select_gateways, threshold, threshold_transfer,
};
pub use scenario::{IcnFlowSection, IcnScenario, Interference};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TopologyError;

#[derive(Debug, Error, PartialEq)]
pub enum IcnError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("mobility: {0}")]
    Mobility(String),
    #[error("flow {flow}: {why}")]
    Flow { flow: usize, why: String },
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Config(String),
    #[error("invariant violated at slot {slot}: {what}")]
    Invariant { slot: u64, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Single time-scale back-pressure; gateways and mobiles hold plain per-destination queues.
    Backpressure,
    /// Back-pressure with per-super-slot source routing over gateway pairs.
    BpSr,
    /// Back-pressure with gateway backlogs advertised at 1/T scale.
    TwoScale,
}
