//! Min-cost controlled mobility: route catalog, online controller and LP reference.

mod controller;
mod oracle;
mod scenario;

pub use controller::{
    pickup_decision, select_route, ArrivalModel, stationary_enqueue, update_deficit, update_queues, Controller,
    ControllerState, InfoMode, MobilityRun, RouteChoice, StaleSnapshot,
};
pub use oracle::{reference_lp_solve, supportability_check, LpOutcome};
pub use scenario::{FlowSection, MobilityScenario, RouteSection};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("stationary {0} has no route that picks up from it")]
    NoReachableRoute(String),
    #[error("unknown stationary `{0}`")]
    UnknownStationary(String),
    #[error("route list is empty")]
    NoRoutes,
    #[error("{0}")]
    Invalid(String),
    #[error("rates are not supportable")]
    Infeasible,
}

/// One patrol route of a mobile.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub name: String,
    /// (stationary, contact count) pairs.
    pub visits: Vec<(usize, u32)>,
    /// Duration in slots.
    pub duration: u64,
    /// Per-slot route cost.
    pub cost: f64,
    /// Minimum long-run fraction of time on this route.
    pub floor: f64,
    pub mobile: usize,
}

impl RouteSpec {
    pub fn contacts(&self, l: usize) -> u32 {
        self.visits.iter().filter(|(s, _)| *s == l).map(|(_, c)| c).sum()
    }
}

/// A stationary source sending to one stationary destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuleFlow {
    pub source: usize,
    pub dest: usize,
    /// Packets per slot.
    pub rate: f64,
}

/// Stationaries, routes and per-contact budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityNetwork {
    pub stationaries: Vec<String>,
    pub routes: Vec<RouteSpec>,
    pub pickup_per_contact: f64,
    pub dropoff_per_contact: f64,
}

impl MobilityNetwork {
    /// Pickup rate from stationary `l` while on route `j`, packets per slot.
    pub fn pickup_rate(&self, l: usize, j: usize) -> f64 {
        let r = &self.routes[j];
        self.pickup_per_contact * r.contacts(l) as f64 / r.duration as f64
    }

    pub fn dropoff_rate(&self, l: usize, j: usize) -> f64 {
        let r = &self.routes[j];
        self.dropoff_per_contact * r.contacts(l) as f64 / r.duration as f64
    }

    pub fn mobiles(&self) -> usize {
        self.routes.iter().map(|r| r.mobile + 1).max().unwrap_or(0)
    }

    pub fn longest_route(&self) -> u64 {
        self.routes.iter().map(|r| r.duration).max().unwrap_or(1)
    }

    pub fn index_of(&self, name: &str) -> Result<usize, MobilityError> {
        self.stationaries
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| MobilityError::UnknownStationary(name.to_string()))
    }
}

/// Per-packet pickup costs a[l][j], the cost knob K and the deficit scale κ.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub pickup: Vec<Vec<f64>>,
    pub k: f64,
    pub kappa: f64,
}

impl CostModel {
    /// κ chosen so that one contact's worth of packets balances a longest route.
    pub fn default_kappa(net: &MobilityNetwork) -> f64 {
        net.pickup_per_contact.max(net.dropoff_per_contact) / net.longest_route() as f64
    }

    pub fn pickup_cost(&self, l: usize, j: usize) -> f64 {
        self.pickup.get(l).and_then(|r| r.get(j)).copied().unwrap_or(0.0)
    }
}
