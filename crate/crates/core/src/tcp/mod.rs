//! TCP with random linear coding over block-fading wireless paths: AIMD
//! window chains, priority routers, multipath control and the analytic oracles.

mod ack;
mod analysis;
mod channel;
mod coding;
mod engine;
mod router;
mod window;

pub use ack::{dest_ack_logic, AckEvent, Arrival, Receiver};
pub use analysis::{
    rate_function_lprime, simulate_window_chain, solve_beta, steady_state_oracle, throughput_lower_bound,
    BetaSolution, SteadyState, LPRIME_CAP,
};
pub use channel::{channel_evolve, channel_transmit, ChannelLevel, ChannelProfile, ChannelState};
pub use coding::{decode_check, gf, CodedReceipt, DecodeMode, FIELD_SIZE};
pub use engine::{AqmSection, PathPlan, MultipathController, TcpEngine, TcpRun, TcpScenario, Transport};
pub use router::{router_serve, Burst, BurstKind, RouterQueues};
pub use window::{f_eff, path_window_step, rtt_estimator, window_step, Outcome, RttEstimator, RTO_FACTOR};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TcpError {
    #[error("channel profile: {0}")]
    Profile(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Config(String),
    #[error("invariant violated at slot {slot}: {what}")]
    Invariant { slot: u64, what: String },
}
