use serde::{Deserialize, Serialize};

use super::{Algorithm, FlowKind, IcnEngine, IcnError, IcnFlow, MobilityModel};
use crate::bp::{InterferenceModel, Scheduler, UtilityFlow};
use crate::sim::{build_topology, TopologySpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interference {
    #[default]
    NodeExclusive,
    /// Every link may transmit every slot (one send and one receive per node on directed lines).
    AllLinks,
}

/// `[icn]` section of a scenario file. Times are in slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcnScenario {
    pub algorithm: Algorithm,
    /// Super slot length T.
    pub super_slot: u64,
    /// Packets per contact in each direction.
    pub contact_budget: usize,
    #[serde(default = "default_eta")]
    pub eta: usize,
    #[serde(default = "yes")]
    pub loop_prevention: bool,
    #[serde(default)]
    pub interference: Interference,
    #[serde(default = "default_scheduler")]
    pub scheduler: Scheduler,
    #[serde(default = "yes")]
    pub check_invariants: bool,
    /// Metrics sampling period; defaults to the super slot.
    #[serde(default)]
    pub sample_every: Option<u64>,
    pub topology: TopologySpec,
    pub mobility: MobilityModel,
    pub flows: Vec<IcnFlowSection>,
}

/// A flow has either a fixed Bernoulli `rate` or a log `utility` with rate control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcnFlowSection {
    pub source: String,
    pub dest: String,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub utility: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Packets per admission decision.
    #[serde(default = "default_batch")]
    pub batch: u32,
    #[serde(default = "default_interval")]
    pub interval: u64,
    /// Shadow packets among each admitted batch.
    #[serde(default)]
    pub shadow: u32,
}

fn default_eta() -> usize {
    10
}

fn yes() -> bool {
    true
}

fn default_scheduler() -> Scheduler {
    Scheduler::Greedy
}

fn default_beta() -> f64 {
    1.0
}

fn default_batch() -> u32 {
    3
}

fn default_interval() -> u64 {
    1
}

impl IcnScenario {
    pub fn flows(&self, topo: &crate::sim::TopologyGraph) -> Result<Vec<IcnFlow>, IcnError> {
        let mut out = Vec::with_capacity(self.flows.len());
        for (i, f) in self.flows.iter().enumerate() {
            let bad = |why: &str| IcnError::Flow { flow: i, why: why.to_string() };
            let kind = match (f.rate, f.utility) {
                (Some(r), None) => {
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(bad("rate must be a non-negative number"));
                    }
                    if f.shadow > 0 {
                        return Err(bad("shadow packets need a rate-controlled flow"));
                    }
                    FlowKind::Fixed(r)
                }
                (None, Some(k)) => {
                    if k <= 0.0 || f.beta <= 0.0 || f.batch < 1 || f.interval < 1 {
                        return Err(bad("utility, beta, batch and interval must be positive"));
                    }
                    if f.shadow >= f.batch {
                        return Err(bad("shadow count must be below the batch size"));
                    }
                    FlowKind::Utility(UtilityFlow::new(k, f.batch, f.beta, f.interval))
                }
                _ => return Err(bad("exactly one of `rate` and `utility` is required")),
            };
            out.push(IcnFlow {
                source: topo.by_label(&f.source)?,
                dest: topo.by_label(&f.dest)?,
                kind,
                shadow: f.shadow,
            });
        }
        Ok(out)
    }

    pub fn engine(&self, seed: u64) -> Result<IcnEngine, IcnError> {
        if self.super_slot == 0 {
            return Err(IcnError::Config("super_slot must be positive".into()));
        }
        if self.eta == 0 {
            return Err(IcnError::Config("eta must be positive".into()));
        }
        if self.sample_every == Some(0) {
            return Err(IcnError::Config("sample_every must be positive".into()));
        }
        let topo = build_topology(&self.topology)?;
        let flows = self.flows(&topo)?;
        let model = match self.interference {
            Interference::NodeExclusive => InterferenceModel::NodeExclusive(self.scheduler),
            Interference::AllLinks => InterferenceModel::all_links(&topo),
        };
        let mut e = IcnEngine::new(topo, self.algorithm, flows, &self.mobility, seed)?;
        e.super_slot = self.super_slot;
        e.eta = self.eta;
        e.contact_budget = self.contact_budget;
        e.loop_prevention = self.loop_prevention;
        e.model = model;
        e.check_invariants = self.check_invariants;
        e.sample_every = self.sample_every.unwrap_or(self.super_slot);
        Ok(e)
    }
}
