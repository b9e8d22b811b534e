use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{
    advertise_gateway_queue, destination_gateway_release, exchange_commodity, loop_prevention_filter,
    select_gateways, threshold, threshold_transfer,
};
use super::{Algorithm, IcnError, MarkovMobile, MobilityModel};
use crate::bp::{
    backpressure_weights, maxweight_schedule, Candidate, InterferenceModel, Packet, PacketQueue, PerDestQueues,
    Scheduler, UtilityFlow,
};
use crate::sim::{stream_id, stream_rng, MetricsSink, NodeId, StreamKind, TopologyGraph};

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// Packets per slot; the fractional part is a Bernoulli draw.
    Fixed(f64),
    Utility(UtilityFlow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcnFlow {
    pub source: NodeId,
    pub dest: NodeId,
    pub kind: FlowKind,
    /// Shadow packets per admitted batch.
    pub shadow: u32,
}

/// Per-flow counters; `window_*`, delays and pickups cover the second half of the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub admitted: u64,
    pub admitted_data: u64,
    pub delivered_data: u64,
    pub delivered_shadow: u64,
    pub window_admitted: u64,
    pub window_admitted_data: u64,
    pub window_delivered_data: u64,
    pub delay_sum: f64,
    pub delay_count: u64,
    pub pickup_sum: f64,
    pub pickup_count: u64,
}

impl FlowStats {
    pub fn mean_delay(&self) -> f64 {
        if self.delay_count == 0 {
            f64::NAN
        } else {
            self.delay_sum / self.delay_count as f64
        }
    }

    pub fn mean_pickup_delay(&self) -> f64 {
        if self.pickup_count == 0 {
            f64::NAN
        } else {
            self.pickup_sum / self.pickup_count as f64
        }
    }
}

/// Queue sizes by class, maximized over every slot of the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalityStats {
    /// Slots where some internal queue toward a gateway reached its hop index.
    pub violations: u64,
    pub first_violation: Option<u64>,
    pub max_internal_type1: usize,
    pub max_source_backlog: usize,
    pub max_gateway_backlog: usize,
    pub max_mobile_backlog: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcnRun {
    pub horizon: u64,
    pub window_start: u64,
    pub flows: Vec<FlowStats>,
    pub locality: LocalityStats,
    pub created: u64,
    pub delivered: u64,
    pub in_network: u64,
}

impl IcnRun {
    fn window(&self) -> f64 {
        (self.horizon - self.window_start).max(1) as f64
    }

    /// Data packets admitted per slot over the window.
    pub fn data_rate(&self, flow: usize) -> f64 {
        self.flows[flow].window_admitted_data as f64 / self.window()
    }

    pub fn admitted_rate(&self, flow: usize) -> f64 {
        self.flows[flow].window_admitted as f64 / self.window()
    }

    pub fn goodput(&self, flow: usize) -> f64 {
        self.flows[flow].window_delivered_data as f64 / self.window()
    }
}

struct Staged {
    to: NodeId,
    commodity: NodeId,
    packet: Packet,
}

/// Slotted simulation of one ICN under one routing algorithm.
pub struct IcnEngine {
    pub topo: TopologyGraph,
    pub algorithm: Algorithm,
    pub super_slot: u64,
    pub eta: usize,
    pub contact_budget: usize,
    pub loop_prevention: bool,
    pub model: InterferenceModel,
    pub check_invariants: bool,
    pub sample_every: u64,
    flows: Vec<IcnFlow>,
    inter: Vec<bool>,
    choices: Vec<Option<(NodeId, NodeId)>>,
    type1: PerDestQueues,
    type2: PerDestQueues,
    carried: Vec<Vec<PacketQueue>>,
    mobiles: Vec<MarkovMobile>,
    weight_commodities: Vec<NodeId>,
    exchange_commodities: Vec<NodeId>,
    source_thresholds: Vec<(NodeId, NodeId, f64)>,
    relay_thresholds: Vec<(NodeId, NodeId, NodeId, f64)>,
    dest_thresholds: Vec<(NodeId, NodeId, f64)>,
    hop_bounds: Vec<(NodeId, NodeId, usize)>,
    flow_rngs: Vec<ChaCha8Rng>,
    mobile_rngs: Vec<ChaCha8Rng>,
    next_id: u64,
    stats: Vec<FlowStats>,
    locality: LocalityStats,
    created: u64,
    delivered: u64,
    window_start: u64,
}

impl IcnEngine {
    pub fn new(
        topo: TopologyGraph,
        algorithm: Algorithm,
        flows: Vec<IcnFlow>,
        mobility: &MobilityModel,
        seed: u64,
    ) -> Result<Self, IcnError> {
        let n = topo.nodes().len();
        let mut mobiles = Vec::new();
        for m in topo.mobiles() {
            mobiles.push(MarkovMobile::new(m.contacts.clone(), mobility.matrix(m.contacts.len()))?);
        }
        let inter: Vec<bool> =
            flows.iter().map(|f| topo.cluster_of(f.source) != topo.cluster_of(f.dest)).collect();
        for (i, f) in flows.iter().enumerate() {
            if f.source == f.dest {
                return Err(IcnError::Flow { flow: i, why: "source equals destination".into() });
            }
            if algorithm == Algorithm::BpSr && matches!(f.kind, FlowKind::Utility(_)) {
                return Err(IcnError::Flow { flow: i, why: "BP+SR runs take fixed-rate flows".into() });
            }
            if inter[i] && topo.mobiles().is_empty() {
                return Err(IcnError::Flow { flow: i, why: "inter-cluster flow but no mobiles".into() });
            }
        }
        let gateways: Vec<NodeId> = topo.gateways().collect();
        let mut dests: Vec<NodeId> = flows.iter().map(|f| f.dest).collect();
        dests.sort();
        dests.dedup();
        let (weight_commodities, exchange_commodities) = match algorithm {
            Algorithm::BpSr => {
                let mut w = gateways.clone();
                w.extend(dests.iter().copied());
                w.sort();
                w.dedup();
                (w, gateways.clone())
            }
            _ => (dests.clone(), dests.clone()),
        };
        let hop_bounds = hop_bounds(&topo);
        let flow_rngs = (0..flows.len()).map(|i| stream_rng(seed, stream_id(StreamKind::Arrivals, i as u32))).collect();
        let mobile_rngs =
            (0..mobiles.len()).map(|i| stream_rng(seed, stream_id(StreamKind::Mobility, i as u32))).collect();
        let stats = vec![FlowStats::default(); flows.len()];
        let choices = vec![None; flows.len()];
        let carried = vec![vec![PacketQueue::default(); n]; mobiles.len()];
        Ok(Self {
            type1: PerDestQueues::new(n),
            type2: PerDestQueues::new(n),
            topo,
            algorithm,
            super_slot: 1000,
            eta: 10,
            contact_budget: 1000,
            loop_prevention: true,
            model: InterferenceModel::NodeExclusive(Scheduler::Greedy),
            check_invariants: true,
            sample_every: 1000,
            flows,
            inter,
            choices,
            carried,
            mobiles,
            weight_commodities,
            exchange_commodities,
            source_thresholds: Vec::new(),
            relay_thresholds: Vec::new(),
            dest_thresholds: Vec::new(),
            hop_bounds,
            flow_rngs,
            mobile_rngs,
            next_id: 0,
            stats,
            locality: LocalityStats::default(),
            created: 0,
            delivered: 0,
            window_start: 0,
        })
    }

    pub fn flows(&self) -> &[IcnFlow] {
        &self.flows
    }

    pub fn mobiles(&self) -> &[MarkovMobile] {
        &self.mobiles
    }

    pub fn type1(&self) -> &PerDestQueues {
        &self.type1
    }

    pub fn type2(&self) -> &PerDestQueues {
        &self.type2
    }

    pub fn carried(&self, mobile: usize, commodity: NodeId) -> usize {
        self.carried[mobile][commodity.index()].len()
    }

    pub fn in_network(&self) -> u64 {
        let c: usize = self.carried.iter().flatten().map(PacketQueue::len).sum();
        (self.type1.total() + self.type2.total() + c) as u64
    }

    /// Simulate slots 0..horizon. Statistics cover the second half.
    pub fn run(&mut self, horizon: u64, mut sink: Option<&mut MetricsSink>) -> Result<IcnRun, IcnError> {
        self.window_start = horizon / 2;
        for t in 0..horizon {
            if t % self.super_slot == 0 {
                self.boundary(t, sink.as_deref_mut());
                if self.check_invariants {
                    self.check_conservation(t)?;
                }
            }
            self.transfers();
            self.schedule(t)?;
            self.generate(t);
            self.track_locality(t);
            if let Some(s) = sink.as_deref_mut() {
                if t % self.sample_every == 0 {
                    self.sample(t, s);
                }
            }
        }
        if self.check_invariants {
            self.check_conservation(horizon)?;
        }
        let run = IcnRun {
            horizon,
            window_start: self.window_start,
            flows: self.stats.clone(),
            locality: self.locality.clone(),
            created: self.created,
            delivered: self.delivered,
            in_network: self.in_network(),
        };
        if let Some(s) = sink {
            for i in 0..self.flows.len() {
                let subj = self.flow_label(i);
                let _ = s.record(horizon, "admitted_rate", &subj, run.admitted_rate(i));
                let _ = s.record(horizon, "data_rate", &subj, run.data_rate(i));
                let _ = s.record(horizon, "goodput", &subj, run.goodput(i));
                let _ = s.record(horizon, "mean_delay", &subj, run.flows[i].mean_delay());
                let _ = s.record(horizon, "mean_pickup_delay", &subj, run.flows[i].mean_pickup_delay());
            }
            let l = &run.locality;
            let _ = s.record(horizon, "locality_violations", "all", l.violations as f64);
            let _ = s.record(horizon, "max_internal_type1", "all", l.max_internal_type1 as f64);
            let _ = s.record(horizon, "max_source_backlog", "all", l.max_source_backlog as f64);
            let _ = s.record(horizon, "max_gateway_backlog", "all", l.max_gateway_backlog as f64);
            let _ = s.record(horizon, "max_mobile_backlog", "all", l.max_mobile_backlog as f64);
        }
        Ok(run)
    }

    fn flow_label(&self, i: usize) -> String {
        let f = &self.flows[i];
        format!("{}->{}", self.topo.label(f.source), self.topo.label(f.dest))
    }

    fn cluster_size(&self, n: NodeId) -> usize {
        self.topo.cluster(self.topo.cluster_of(n)).nodes.len()
    }

    fn same_cluster(&self, a: NodeId, b: NodeId) -> bool {
        self.topo.cluster_of(a) == self.topo.cluster_of(b)
    }

    // ---- super-slot boundary ----

    fn boundary(&mut self, t: u64, mut sink: Option<&mut MetricsSink>) {
        if t > 0 {
            for (m, rng) in self.mobiles.iter_mut().zip(self.mobile_rngs.iter_mut()) {
                m.step(rng);
            }
        }
        for m in 0..self.mobiles.len() {
            let g = self.mobiles[m].gateway();
            let (up, down) = self.exchange(m, g, t);
            if let Some(s) = sink.as_deref_mut() {
                let subj = format!("{}@{}", self.topo.mobiles()[m].label, self.topo.label(g));
                let _ = s.record(t, "contact_pickup", &subj, up as f64);
                let _ = s.record(t, "contact_dropoff", &subj, down as f64);
            }
        }
        if self.algorithm == Algorithm::BpSr {
            self.select_routes();
            self.snapshot_thresholds();
        }
    }

    fn gateway_len(&self, g: NodeId, j: NodeId) -> usize {
        match self.algorithm {
            Algorithm::Backpressure => self.type1.len(g, j),
            Algorithm::BpSr if j == g => 0,
            _ => self.type2.len(g, j),
        }
    }

    fn pickup_allowed(&self, g: NodeId, j: NodeId) -> bool {
        match self.algorithm {
            Algorithm::BpSr => j != g,
            // packets already in their destination cluster stay there
            _ => !self.same_cluster(g, j),
        }
    }

    /// Mobile `m` meets gateway `g`: one commodity each way, up to the contact budget.
    fn exchange(&mut self, m: usize, g: NodeId, t: u64) -> (usize, usize) {
        let commodities = self.exchange_commodities.clone();
        let upward: Vec<NodeId> = commodities.iter().copied().filter(|&j| self.pickup_allowed(g, j)).collect();
        let up = exchange_commodity(
            &upward,
            |j| self.gateway_len(g, j) as f64,
            |j| self.carried[m][j.index()].len() as f64,
        );
        let down = exchange_commodity(
            &commodities,
            |j| self.carried[m][j.index()].len() as f64,
            |j| self.gateway_len(g, j) as f64,
        );
        let budget = self.contact_budget;
        let picked = match up {
            Some(j) => match self.algorithm {
                Algorithm::Backpressure => self.type1.get_mut(g, j).serve(budget),
                _ => self.type2.get_mut(g, j).serve(budget),
            },
            None => Vec::new(),
        };
        let dropped = match down {
            Some(j) => {
                let lp = self.loop_prevention;
                self.carried[m][j.index()].serve_filtered(budget, |p| !lp || loop_prevention_filter(p, g))
            }
            None => Vec::new(),
        };
        let (n_up, n_down) = (picked.len(), dropped.len());
        if let Some(j) = up {
            for mut p in picked {
                p.last_gateway = Some(g);
                if p.picked_at.is_none() {
                    p.picked_at = Some(t);
                    if !p.shadow && t >= self.window_start {
                        let s = &mut self.stats[p.flow as usize];
                        s.pickup_sum += (t - p.created) as f64;
                        s.pickup_count += 1;
                    }
                }
                self.carried[m][j.index()].push(p);
            }
        }
        for p in dropped {
            self.land(g, p, t);
        }
        (n_up, n_down)
    }

    fn select_routes(&mut self) {
        for f in 0..self.flows.len() {
            if !self.inter[f] {
                continue;
            }
            let (s, d) = (self.flows[f].source, self.flows[f].dest);
            let gs = self.topo.cluster(self.topo.cluster_of(s)).gateways.clone();
            let gd = self.topo.cluster(self.topo.cluster_of(d)).gateways.clone();
            let u = |a: NodeId, b: NodeId| if a == b { 0.0 } else { self.type2.len(a, b) as f64 };
            self.choices[f] = select_gateways(&gs, &gd, |x, y| u(s, x) + u(x, y) + u(y, d));
        }
    }

    fn snapshot_thresholds(&mut self) {
        let t = self.super_slot;
        self.source_thresholds.clear();
        let mut sources: Vec<NodeId> =
            (0..self.flows.len()).filter(|&f| self.inter[f]).map(|f| self.flows[f].source).collect();
        sources.sort();
        sources.dedup();
        for s in sources {
            let size = self.cluster_size(s);
            for &g in &self.topo.cluster(self.topo.cluster_of(s)).gateways {
                if g != s {
                    self.source_thresholds.push((s, g, threshold(self.type2.len(s, g), t, size)));
                }
            }
        }
        self.relay_thresholds.clear();
        self.dest_thresholds.clear();
        let gateways: Vec<NodeId> = self.topo.gateways().collect();
        for c in self.topo.clusters() {
            let size = c.nodes.len();
            for &g1 in &c.gateways {
                for &g2 in &c.gateways {
                    if g1 == g2 {
                        continue;
                    }
                    let diff = |l: NodeId| {
                        let a = if l == g1 { 0 } else { self.type2.len(g1, l) } as f64;
                        let b = if l == g2 { 0 } else { self.type2.len(g2, l) } as f64;
                        a - b
                    };
                    let candidates: Vec<NodeId> = gateways.iter().copied().filter(|&l| l != g1).collect();
                    if let Some((l, w)) = backpressure_weights(&candidates, diff, |_| 0.0) {
                        let theta = w.max(0.0) * size as f64 / t as f64;
                        self.relay_thresholds.push((g1, g2, l, theta));
                    }
                }
                for &n in &c.nodes {
                    if n != g1 {
                        self.dest_thresholds.push((g1, n, threshold(self.type2.len(g1, n), t, size)));
                    }
                }
            }
        }
    }

    // ---- per-slot ----

    fn transfers(&mut self) {
        match self.algorithm {
            Algorithm::BpSr => {
                for i in 0..self.source_thresholds.len() {
                    let (s, g, theta) = self.source_thresholds[i];
                    let k = threshold_transfer(theta, self.type1.len(s, g), self.type2.len(s, g), self.eta);
                    self.move_packets((s, g), (s, g), k);
                }
                for i in 0..self.relay_thresholds.len() {
                    let (g1, g2, l, theta) = self.relay_thresholds[i];
                    let k = threshold_transfer(theta, self.type1.len(g1, g2), self.type2.len(g1, l), self.eta);
                    self.move_packets((g1, l), (g1, g2), k);
                }
                for i in 0..self.dest_thresholds.len() {
                    let (g, n, theta) = self.dest_thresholds[i];
                    let k = threshold_transfer(theta, self.type1.len(g, n), self.type2.len(g, n), self.eta);
                    self.move_packets((g, n), (g, n), k);
                }
            }
            Algorithm::TwoScale => {
                for f in 0..self.flows.len() {
                    let d = self.flows[f].dest;
                    if !self.inter[f] {
                        continue;
                    }
                    for &g in &self.topo.cluster(self.topo.cluster_of(d)).gateways.clone() {
                        if g == d {
                            continue;
                        }
                        let k = destination_gateway_release(
                            self.type2.len(g, d),
                            self.type1.len(g, d),
                            self.super_slot,
                            self.eta,
                        );
                        self.move_packets((g, d), (g, d), k);
                    }
                }
            }
            Algorithm::Backpressure => {}
        }
    }

    fn move_packets(&mut self, from: (NodeId, NodeId), to: (NodeId, NodeId), k: usize) {
        if k == 0 {
            return;
        }
        let moved = self.type2.get_mut(from.0, from.1).serve(k);
        let q = self.type1.get_mut(to.0, to.1);
        for p in moved {
            q.push(p);
        }
    }

    fn receiver_len(&self, n: NodeId, c: NodeId) -> f64 {
        if self.algorithm == Algorithm::TwoScale && self.topo.is_gateway(n) && !self.same_cluster(n, c) {
            advertise_gateway_queue(self.type2.len(n, c), self.super_slot)
        } else {
            self.type1.len(n, c) as f64
        }
    }

    fn schedule(&mut self, t: u64) -> Result<(), IcnError> {
        let mut staged: Vec<Staged> = Vec::new();
        for ci in 0..self.topo.clusters().len() {
            let mut cands = Vec::new();
            for &lid in &self.topo.clusters()[ci].links {
                let link = *self.topo.link(lid);
                let best = backpressure_weights(
                    &self.weight_commodities,
                    |c| self.type1.len(link.from, c) as f64,
                    |c| self.receiver_len(link.to, c),
                );
                if let Some((commodity, weight)) = best {
                    cands.push(Candidate { link: lid, from: link.from, to: link.to, rate: link.rate, commodity, weight });
                }
            }
            let chosen = maxweight_schedule(&cands, &self.model);
            if self.check_invariants {
                self.check_schedule(t, &chosen)?;
            }
            for c in chosen {
                for packet in self.type1.get_mut(c.from, c.commodity).serve(c.rate as usize) {
                    staged.push(Staged { to: c.to, commodity: c.commodity, packet });
                }
            }
        }
        for s in staged {
            self.arrive(s.to, s.commodity, s.packet, t);
        }
        Ok(())
    }

    fn check_schedule(&self, t: u64, chosen: &[Candidate]) -> Result<(), IcnError> {
        for c in chosen {
            if c.weight <= 0.0 {
                return Err(IcnError::Invariant { slot: t, what: format!("link {} active with weight {}", c.link.0, c.weight) });
            }
        }
        if matches!(self.model, InterferenceModel::NodeExclusive(_)) {
            let mut used: Vec<NodeId> = chosen.iter().flat_map(|c| [c.from, c.to]).collect();
            used.sort();
            if used.windows(2).any(|w| w[0] == w[1]) {
                return Err(IcnError::Invariant { slot: t, what: "two active links share a node".into() });
            }
        }
        Ok(())
    }

    /// A packet reaches node `n` over an intra-cluster link toward `commodity`.
    fn arrive(&mut self, n: NodeId, commodity: NodeId, p: Packet, t: u64) {
        match self.algorithm {
            Algorithm::BpSr => {
                if n == p.dest {
                    self.deliver(p, t);
                } else if n == commodity && p.dst_gateway.is_some() {
                    self.land(n, p, t);
                } else {
                    self.type1.get_mut(n, commodity).push(p);
                }
            }
            Algorithm::TwoScale => {
                if n == p.dest {
                    self.deliver(p, t);
                } else if self.topo.is_gateway(n) && !self.same_cluster(n, p.dest) {
                    self.type2.get_mut(n, p.dest).push(p);
                } else {
                    self.type1.get_mut(n, p.dest).push(p);
                }
            }
            Algorithm::Backpressure => {
                if n == p.dest {
                    self.deliver(p, t);
                } else {
                    self.type1.get_mut(n, p.dest).push(p);
                }
            }
        }
    }

    /// A packet lands at gateway `g`, dropped by a mobile or relayed to it.
    fn land(&mut self, g: NodeId, p: Packet, t: u64) {
        if p.dest == g {
            self.deliver(p, t);
            return;
        }
        match self.algorithm {
            Algorithm::Backpressure => self.type1.get_mut(g, p.dest).push(p),
            Algorithm::TwoScale => self.type2.get_mut(g, p.dest).push(p),
            Algorithm::BpSr => {
                let dg = p.dst_gateway.unwrap_or(p.dest);
                if dg == g {
                    self.type2.get_mut(g, p.dest).push(p);
                } else {
                    self.type2.get_mut(g, dg).push(p);
                }
            }
        }
    }

    fn deliver(&mut self, p: Packet, t: u64) {
        self.delivered += 1;
        let s = &mut self.stats[p.flow as usize];
        if p.shadow {
            s.delivered_shadow += 1;
            return;
        }
        s.delivered_data += 1;
        if t >= self.window_start {
            s.window_delivered_data += 1;
            s.delay_sum += (t - p.created) as f64;
            s.delay_count += 1;
        }
    }

    fn local_queue(&self, f: usize) -> f64 {
        let fl = &self.flows[f];
        self.receiver_len(fl.source, fl.dest)
    }

    fn generate(&mut self, t: u64) {
        for f in 0..self.flows.len() {
            let local = self.local_queue(f);
            let rng = &mut self.flow_rngs[f];
            let count = match &mut self.flows[f].kind {
                FlowKind::Fixed(r) => {
                    let whole = r.floor();
                    whole as u32 + u32::from(rng.random::<f64>() < *r - whole)
                }
                FlowKind::Utility(u) => {
                    if !t.is_multiple_of(u.interval) {
                        continue;
                    }
                    let a = u.decide(local);
                    u.observe(a);
                    a
                }
            };
            let shadow = if count > 0 { self.flows[f].shadow.min(count) } else { 0 };
            for k in 0..count {
                let fl = &self.flows[f];
                let mut p = Packet {
                    id: self.next_id,
                    flow: f as u32,
                    created: t,
                    dest: fl.dest,
                    src_gateway: None,
                    dst_gateway: None,
                    last_gateway: None,
                    shadow: k >= count - shadow,
                    picked_at: None,
                };
                self.next_id += 1;
                self.created += 1;
                let s = &mut self.stats[f];
                s.admitted += 1;
                if !p.shadow {
                    s.admitted_data += 1;
                }
                if t >= self.window_start {
                    s.window_admitted += 1;
                    if !p.shadow {
                        s.window_admitted_data += 1;
                    }
                }
                let src = fl.source;
                if self.algorithm == Algorithm::BpSr && self.inter[f] {
                    let (gs, gd) = self.choices[f].expect("gateway pair chosen at the first boundary");
                    p.src_gateway = Some(gs);
                    p.dst_gateway = Some(gd);
                    if src == gs {
                        self.land(gs, p, t);
                    } else {
                        self.type2.get_mut(src, gs).push(p);
                    }
                } else {
                    let d = p.dest;
                    self.arrive(src, d, p, t);
                }
            }
        }
    }

    fn track_locality(&mut self, t: u64) {
        if self.algorithm == Algorithm::BpSr {
            let bad = self.hop_bounds.iter().any(|&(n, g, bound)| self.type1.len(n, g) >= bound);
            if bad {
                self.locality.violations += 1;
                self.locality.first_violation.get_or_insert(t);
            }
        }
        let l = &mut self.locality;
        for node in self.topo.nodes() {
            let n = node.id;
            if self.topo.is_gateway(n) {
                for c in self.topo.nodes() {
                    l.max_gateway_backlog = l.max_gateway_backlog.max(self.type2.len(n, c.id));
                }
            } else {
                for &c in &self.weight_commodities {
                    l.max_internal_type1 = l.max_internal_type1.max(self.type1.len(n, c));
                    l.max_source_backlog = l.max_source_backlog.max(self.type2.len(n, c));
                }
            }
        }
        for m in &self.carried {
            for &c in &self.exchange_commodities {
                l.max_mobile_backlog = l.max_mobile_backlog.max(m[c.index()].len());
            }
        }
    }

    fn check_conservation(&self, t: u64) -> Result<(), IcnError> {
        let held = self.in_network();
        if self.created != self.delivered + held {
            return Err(IcnError::Invariant {
                slot: t,
                what: format!("created {} != delivered {} + held {}", self.created, self.delivered, held),
            });
        }
        Ok(())
    }

    fn sample(&self, t: u64, s: &mut MetricsSink) {
        for (i, f) in self.flows.iter().enumerate() {
            let subj = self.flow_label(i);
            if let FlowKind::Utility(u) = &f.kind {
                let _ = s.record(t, "rate_estimate", &subj, u.rate);
            }
            let _ = s.record(t, "admitted", &subj, self.stats[i].admitted as f64);
            let _ = s.record(t, "delivered", &subj, self.stats[i].delivered_data as f64);
        }
        for g in self.topo.gateways() {
            let backlog = match self.algorithm {
                Algorithm::Backpressure => self.type1.node_total(g),
                _ => self.type2.node_total(g),
            };
            let _ = s.record(t, "gateway_backlog", self.topo.label(g), backlog as f64);
        }
        let internal: usize = self
            .topo
            .nodes()
            .iter()
            .filter(|n| !self.topo.is_gateway(n.id))
            .map(|n| self.type1.node_total(n.id))
            .sum();
        let _ = s.record(t, "internal_backlog", "all", internal as f64);
        for f in 0..self.flows.len() {
            let src = self.flows[f].source;
            if self.inter[f] && !self.topo.is_gateway(src) {
                let _ = s.record(t, "source_backlog", self.topo.label(src), self.type2.node_total(src) as f64);
            }
        }
        for (m, q) in self.carried.iter().enumerate() {
            let total: usize = q.iter().map(PacketQueue::len).sum();
            let _ = s.record(t, "mobile_backlog", &self.topo.mobiles()[m].label, total as f64);
        }
    }
}

/// (internal node, gateway, hop index) for every internal node that can reach a gateway of its cluster.
fn hop_bounds(topo: &TopologyGraph) -> Vec<(NodeId, NodeId, usize)> {
    let mut out = Vec::new();
    for c in topo.clusters() {
        for &g in &c.gateways {
            let mut dist = vec![usize::MAX; topo.nodes().len()];
            dist[g.index()] = 0;
            let mut queue = VecDeque::from([g]);
            while let Some(v) = queue.pop_front() {
                for &lid in &c.links {
                    let l = topo.link(lid);
                    if l.to == v && dist[l.from.index()] == usize::MAX {
                        dist[l.from.index()] = dist[v.index()] + 1;
                        queue.push_back(l.from);
                    }
                }
            }
            for &n in &c.internals {
                if dist[n.index()] != usize::MAX {
                    out.push((n, g, dist[n.index()] + 1));
                }
            }
        }
    }
    out
}
