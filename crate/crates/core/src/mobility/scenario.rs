use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ArrivalModel, Controller, CostModel, InfoMode, MobilityError, MobilityNetwork, MuleFlow, RouteSpec,
};

/// `[mobility]` section of a scenario file. Durations are in minutes and rates
/// in packets per minute; both are converted with `slots_per_minute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityScenario {
    #[serde(default = "default_spm")]
    pub slots_per_minute: u64,
    pub pickup_per_contact: f64,
    pub dropoff_per_contact: f64,
    pub k: f64,
    /// Defaults to the per-contact budget over the longest route duration.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: String,
    /// "fluid" or "bernoulli".
    #[serde(default = "default_arrivals")]
    pub arrivals: String,
    pub stationaries: Vec<String>,
    pub routes: Vec<RouteSection>,
    #[serde(default)]
    pub flows: Vec<FlowSection>,
    /// Pin route time fractions instead of running the controller.
    #[serde(default)]
    pub forced_fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSection {
    pub name: String,
    /// Stationaries contacted, repeated once per contact.
    pub visits: Vec<String>,
    pub minutes: f64,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub mobile: usize,
    /// Per-packet pickup cost by stationary; missing entries cost 0.
    #[serde(default)]
    pub pickup_cost: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub source: String,
    pub dest: String,
    pub rate_per_min: f64,
}

fn default_spm() -> u64 {
    60
}

fn default_arrivals() -> String {
    "bernoulli".into()
}

fn default_mode() -> String {
    "practical".into()
}

impl MobilityScenario {
    pub fn info_mode(&self) -> Result<InfoMode, MobilityError> {
        match self.mode.as_str() {
            "ideal" => Ok(InfoMode::Ideal),
            "practical" => Ok(InfoMode::Practical),
            other => Err(MobilityError::Invalid(format!("unknown mode `{other}`"))),
        }
    }

    pub fn network(&self) -> Result<MobilityNetwork, MobilityError> {
        if self.slots_per_minute == 0 {
            return Err(MobilityError::Invalid("slots_per_minute must be positive".into()));
        }
        if self.pickup_per_contact <= 0.0 || self.dropoff_per_contact <= 0.0 {
            return Err(MobilityError::Invalid("per-contact budgets must be positive".into()));
        }
        let index = |name: &str| {
            self.stationaries
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| MobilityError::UnknownStationary(name.to_string()))
        };
        let mut routes = Vec::with_capacity(self.routes.len());
        for r in &self.routes {
            let mut visits: Vec<(usize, u32)> = Vec::new();
            for v in &r.visits {
                let l = index(v)?;
                match visits.iter_mut().find(|e| e.0 == l) {
                    Some(e) => e.1 += 1,
                    None => visits.push((l, 1)),
                }
            }
            let duration = (r.minutes * self.slots_per_minute as f64).round() as u64;
            if duration == 0 {
                return Err(MobilityError::Invalid(format!("route {} has zero duration", r.name)));
            }
            if !(0.0..=1.0).contains(&r.floor) || r.cost < 0.0 {
                return Err(MobilityError::Invalid(format!("route {} has bad floor or cost", r.name)));
            }
            for s in r.pickup_cost.keys() {
                index(s)?;
            }
            routes.push(RouteSpec {
                name: r.name.clone(),
                visits,
                duration,
                cost: r.cost,
                floor: r.floor,
                mobile: r.mobile,
            });
        }
        if routes.is_empty() {
            return Err(MobilityError::NoRoutes);
        }
        Ok(MobilityNetwork {
            stationaries: self.stationaries.clone(),
            routes,
            pickup_per_contact: self.pickup_per_contact,
            dropoff_per_contact: self.dropoff_per_contact,
        })
    }

    pub fn flows(&self, net: &MobilityNetwork) -> Result<Vec<MuleFlow>, MobilityError> {
        self.flows
            .iter()
            .map(|f| {
                if f.rate_per_min < 0.0 {
                    return Err(MobilityError::Invalid("negative flow rate".into()));
                }
                Ok(MuleFlow {
                    source: net.index_of(&f.source)?,
                    dest: net.index_of(&f.dest)?,
                    rate: f.rate_per_min / self.slots_per_minute as f64,
                })
            })
            .collect()
    }

    pub fn costs(&self, net: &MobilityNetwork) -> Result<CostModel, MobilityError> {
        if self.k <= 0.0 {
            return Err(MobilityError::Invalid("K must be positive".into()));
        }
        let mut pickup = vec![vec![0.0; net.routes.len()]; net.stationaries.len()];
        for (j, r) in self.routes.iter().enumerate() {
            for (s, &a) in &r.pickup_cost {
                if a < 0.0 {
                    return Err(MobilityError::Invalid("negative pickup cost".into()));
                }
                pickup[net.index_of(s)?][j] = a;
            }
        }
        let kappa = self.kappa.unwrap_or_else(|| CostModel::default_kappa(net));
        if kappa <= 0.0 {
            return Err(MobilityError::Invalid("kappa must be positive".into()));
        }
        Ok(CostModel { pickup, k: self.k, kappa })
    }

    pub fn arrival_model(&self) -> Result<ArrivalModel, MobilityError> {
        match self.arrivals.as_str() {
            "fluid" => Ok(ArrivalModel::Fluid),
            "bernoulli" => Ok(ArrivalModel::Bernoulli),
            other => Err(MobilityError::Invalid(format!("unknown arrival model `{other}`"))),
        }
    }

    pub fn controller(&self, seed: u64) -> Result<Controller, MobilityError> {
        let net = self.network()?;
        let flows = self.flows(&net)?;
        let costs = self.costs(&net)?;
        let mut c = Controller::new(net, costs, flows, self.info_mode()?)?.with_seed(seed);
        c.arrivals = self.arrival_model()?;
        if let Some(f) = &self.forced_fractions {
            if f.len() != c.net.routes.len() {
                return Err(MobilityError::Invalid("forced_fractions length differs from routes".into()));
            }
            c.forced = Some(f.clone());
        }
        Ok(c)
    }

    /// Convert a per-slot rate back to packets per minute.
    pub fn per_minute(&self, per_slot: f64) -> f64 {
        per_slot * self.slots_per_minute as f64
    }
}
