use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{CostModel, MobilityError, MobilityNetwork, MuleFlow};
use crate::sim::{stream_id, stream_rng, MetricsSink, StreamKind};

/// Queues and counters of the online controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Stationary queues, indexed [flow][route].
    pub q: Vec<Vec<f64>>,
    /// Mobile queues, indexed [mobile][destination stationary].
    pub carried: Vec<Vec<f64>>,
    /// Deficit counters per route, in slots.
    pub w: Vec<f64>,
    /// Route selections made so far.
    pub k: u64,
}

impl ControllerState {
    pub fn empty(net: &MobilityNetwork, flows: usize) -> Self {
        Self {
            q: vec![vec![0.0; net.routes.len()]; flows],
            carried: vec![vec![0.0; net.stationaries.len()]; net.mobiles().max(1)],
            w: vec![0.0; net.routes.len()],
            k: 0,
        }
    }
}

/// Where the mobile's knowledge of stationary queues comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoMode {
    /// Exact queues, arrivals routed once per selection.
    Ideal,
    /// Queue values as of the last contact, arrivals routed packet by packet.
    Practical,
}

/// How packets appear at the sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalModel {
    /// Exactly `rate` packets per slot, fractional.
    Fluid,
    /// Whole packets, Bernoulli per slot with mean `rate` (integer part always arrives).
    Bernoulli,
}

/// Mobile's last observed value of each q[flow][route], with the selection index of the contact.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleSnapshot {
    entries: Vec<Vec<(f64, Option<u64>)>>,
}

impl StaleSnapshot {
    pub fn new(flows: usize, routes: usize) -> Self {
        Self { entries: vec![vec![(0.0, None); routes]; flows] }
    }

    pub fn value(&self, f: usize, j: usize) -> f64 {
        self.entries[f][j].0
    }

    pub fn entry(&self, f: usize, j: usize) -> (f64, Option<u64>) {
        self.entries[f][j]
    }

    /// Replace every entry of flow `f` with the true queue row at contact `k`.
    pub fn sync(&mut self, f: usize, truth: &[f64], k: u64) {
        for (e, &v) in self.entries[f].iter_mut().zip(truth) {
            *e = (v, Some(k));
        }
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|r| r.iter().map(|e| e.0).collect()).collect()
    }
}

/// Route whose queue a new packet of `flow` joins: argmin of K·a + q, lowest index on ties.
pub fn stationary_enqueue(
    net: &MobilityNetwork,
    costs: &CostModel,
    flow: &MuleFlow,
    q_row: &[f64],
) -> Result<usize, MobilityError> {
    let l = flow.source;
    let mut best: Option<(usize, f64)> = None;
    for (j, &q) in q_row.iter().enumerate() {
        if net.pickup_rate(l, j) <= 0.0 {
            continue;
        }
        let c = costs.k * costs.pickup_cost(l, j) + q;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((j, c));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| MobilityError::NoReachableRoute(net.stationaries[l].clone()))
}

/// Pick up on this route iff the route reaches the source and the local queue
/// exceeds the mobile's backlog toward the destination.
pub fn pickup_decision(pickup_rate: f64, q: f64, carried_for_dest: f64) -> bool {
    pickup_rate > 0.0 && q - carried_for_dest > 0.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteChoice {
    pub route: usize,
    pub score: f64,
    /// Pickup decisions on the chosen route, per flow.
    pub pickups: Vec<bool>,
}

/// Score of one route and its pickup decisions.
fn route_score(
    net: &MobilityNetwork,
    costs: &CostModel,
    flows: &[MuleFlow],
    q_view: &[Vec<f64>],
    carried: &[f64],
    w: f64,
    j: usize,
) -> (f64, Vec<bool>) {
    let route = &net.routes[j];
    let mut score = costs.kappa * w * (1.0 - route.floor) - costs.k * route.cost;
    let mut pickups = Vec::with_capacity(flows.len());
    let mut into_dest = vec![0.0; net.stationaries.len()];
    for (f, flow) in flows.iter().enumerate() {
        let p = net.pickup_rate(flow.source, j);
        let d = pickup_decision(p, q_view[f][j], carried[flow.dest]);
        if d {
            score += q_view[f][j] * p;
            into_dest[flow.dest] += p;
        }
        pickups.push(d);
    }
    for (dest, &backlog) in carried.iter().enumerate() {
        score += backlog * (net.dropoff_rate(dest, j) - into_dest[dest]);
    }
    (score, pickups)
}

/// Route maximizing the drift-plus-penalty score among `candidates`.
pub fn select_route(
    net: &MobilityNetwork,
    costs: &CostModel,
    flows: &[MuleFlow],
    q_view: &[Vec<f64>],
    carried: &[f64],
    w: &[f64],
    candidates: &[usize],
) -> Result<RouteChoice, MobilityError> {
    let mut best: Option<RouteChoice> = None;
    for &j in candidates {
        let (score, pickups) = route_score(net, costs, flows, q_view, carried, w[j], j);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(RouteChoice { route: j, score, pickups });
        }
    }
    best.ok_or(MobilityError::NoRoutes)
}

/// Packets physically moved when a route finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteMoves {
    pub picked: Vec<f64>,
    pub dropped: Vec<f64>,
}

/// Apply the pickups and drop-offs of route `j` (arrivals already in `q`).
/// Each stationary queue loses at most δ·P·T, the mobile delivers at most D·T per destination.
pub fn update_queues(
    net: &MobilityNetwork,
    flows: &[MuleFlow],
    q: &mut [Vec<f64>],
    carried: &mut [f64],
    j: usize,
    pickups: &[bool],
) -> RouteMoves {
    let t = net.routes[j].duration as f64;
    let mut picked = vec![0.0; flows.len()];
    for (f, flow) in flows.iter().enumerate() {
        if pickups[f] {
            let budget = net.pickup_rate(flow.source, j) * t;
            let n = q[f][j].min(budget);
            q[f][j] -= n;
            carried[flow.dest] += n;
            picked[f] = n;
        }
    }
    let mut dropped = vec![0.0; carried.len()];
    for (dest, c) in carried.iter_mut().enumerate() {
        let n = c.min(net.dropoff_rate(dest, j) * t);
        *c -= n;
        dropped[dest] = n;
    }
    RouteMoves { picked, dropped }
}

pub fn update_deficit(w: f64, chosen: bool, duration: f64, floor: f64) -> f64 {
    let served = if chosen { duration } else { 0.0 };
    (w + duration * floor - served).max(0.0)
}

/// Tallies over the measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityRun {
    pub window_slots: f64,
    /// Packets routed into q[flow][route] during the window.
    pub deposits: Vec<Vec<f64>>,
    pub picked: Vec<Vec<f64>>,
    pub delivered: Vec<f64>,
    pub admitted: Vec<f64>,
    /// Slots spent on each route during the window.
    pub route_time: Vec<f64>,
    pub selections: u64,
    /// Largest total queue (stationary + mobile) in each half of the horizon.
    pub max_backlog_first_half: f64,
    pub max_backlog_second_half: f64,
    /// Largest single queue or counter seen.
    pub max_q: f64,
    pub max_carried: f64,
    pub max_w: f64,
    /// Backlog of the first flow's source sampled at each selection: (slot, packets).
    pub source_backlog: Vec<(f64, f64)>,
}

impl MobilityRun {
    /// Split rate of flow f on route j, packets per slot.
    pub fn split(&self, f: usize, j: usize) -> f64 {
        self.deposits[f][j] / self.window_slots
    }

    pub fn fraction(&self, j: usize) -> f64 {
        self.route_time[j] / self.window_slots
    }

    /// Σ a·y + Σ b·f over the window, without the K factor.
    pub fn average_cost(&self, net: &MobilityNetwork, costs: &CostModel, flows: &[MuleFlow]) -> f64 {
        let mut c = 0.0;
        for (f, flow) in flows.iter().enumerate() {
            for j in 0..net.routes.len() {
                c += costs.pickup_cost(flow.source, j) * self.split(f, j);
            }
        }
        for (j, r) in net.routes.iter().enumerate() {
            c += r.cost * self.fraction(j);
        }
        c
    }
}

/// Event-driven controller: each mobile picks a route when its last one ends.
#[derive(Debug, Clone)]
pub struct Controller {
    pub net: MobilityNetwork,
    pub costs: CostModel,
    pub flows: Vec<MuleFlow>,
    pub mode: InfoMode,
    /// Fixed target time fractions replacing the route choice, if set.
    pub forced: Option<Vec<f64>>,
    pub arrivals: ArrivalModel,
    pub state: ControllerState,
    pub snapshot: StaleSnapshot,
    rng: ChaCha8Rng,
}

impl Controller {
    pub fn new(
        net: MobilityNetwork,
        costs: CostModel,
        flows: Vec<MuleFlow>,
        mode: InfoMode,
    ) -> Result<Self, MobilityError> {
        if net.routes.is_empty() {
            return Err(MobilityError::NoRoutes);
        }
        for f in &flows {
            if !(0..net.routes.len()).any(|j| net.pickup_rate(f.source, j) > 0.0) {
                return Err(MobilityError::NoReachableRoute(net.stationaries[f.source].clone()));
            }
        }
        let state = ControllerState::empty(&net, flows.len());
        let snapshot = StaleSnapshot::new(flows.len(), net.routes.len());
        Ok(Self {
            net,
            costs,
            flows,
            mode,
            forced: None,
            arrivals: ArrivalModel::Fluid,
            state,
            snapshot,
            rng: stream_rng(0, stream_id(StreamKind::Arrivals, 0)),
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = stream_rng(seed, stream_id(StreamKind::Arrivals, 0));
        self
    }

    fn draw(&mut self, rate: f64, span: u64) -> f64 {
        match self.arrivals {
            ArrivalModel::Fluid => rate * span as f64,
            ArrivalModel::Bernoulli => {
                let whole = rate.floor();
                let frac = rate - whole;
                let mut n = whole * span as f64;
                for _ in 0..span {
                    if self.rng.random::<f64>() < frac {
                        n += 1.0;
                    }
                }
                n
            }
        }
    }

    fn routes_of(&self, m: usize) -> Vec<usize> {
        (0..self.net.routes.len()).filter(|&j| self.net.routes[j].mobile == m).collect()
    }

    fn view(&self) -> Vec<Vec<f64>> {
        match self.mode {
            InfoMode::Ideal => self.state.q.clone(),
            InfoMode::Practical => self.snapshot.values(),
        }
    }

    /// Run until `horizon` slots; statistics cover the second half.
    pub fn run(&mut self, horizon: u64, mut sink: Option<&mut MetricsSink>) -> MobilityRun {
        let routes = self.net.routes.len();
        let nf = self.flows.len();
        let mobiles = self.net.mobiles().max(1);
        let horizon_f = horizon as f64;
        let warm = horizon_f / 2.0;
        let mut out = MobilityRun {
            window_slots: horizon_f - warm,
            deposits: vec![vec![0.0; routes]; nf],
            picked: vec![vec![0.0; routes]; nf],
            delivered: vec![0.0; self.net.stationaries.len()],
            admitted: vec![0.0; nf],
            route_time: vec![0.0; routes],
            selections: 0,
            max_backlog_first_half: 0.0,
            max_backlog_second_half: 0.0,
            max_q: 0.0,
            max_carried: 0.0,
            max_w: 0.0,
            source_backlog: Vec::new(),
        };
        let route_sets: Vec<Vec<usize>> = (0..mobiles).map(|m| self.routes_of(m)).collect();
        // (slot at which the mobile is free, route in progress with its pickup plan)
        let mut busy: Vec<(u64, Option<(usize, Vec<bool>)>)> = vec![(0, None); mobiles];
        let mut time_on: Vec<f64> = vec![0.0; routes];
        let mut elapsed = vec![0.0; mobiles];
        let mut arrivals_at: u64 = 0;
        let mut targets = self.arrival_targets();

        loop {
            let (m, &(when, _)) = busy
                .iter()
                .enumerate()
                .filter(|(m, _)| !route_sets[*m].is_empty())
                .min_by_key(|(m, b)| (b.0, *m))
                .expect("at least one mobile has routes");
            let now = when.min(horizon);
            self.deposit(arrivals_at, now, warm, &mut targets, &mut out);
            arrivals_at = now;
            if when >= horizon {
                break;
            }
            if let Some((j, pickups)) = busy[m].1.take() {
                self.finish_route(m, j, &pickups, now, warm, &mut out);
            }
            let j = self.choose(m, &route_sets[m], &time_on, elapsed[m]);
            let duration = self.net.routes[j].duration;
            time_on[j] += duration as f64;
            elapsed[m] += duration as f64;
            // route time inside the window
            let (a, b) = (now as f64, (now + duration) as f64);
            out.route_time[j] += (b.min(horizon_f) - a.max(warm)).max(0.0);
            let view = self.view();
            let (_, pickups) = route_score(
                &self.net,
                &self.costs,
                &self.flows,
                &view,
                &self.state.carried[m],
                self.state.w[j],
                j,
            );
            for &r in &route_sets[m] {
                let floor = self.net.routes[r].floor;
                self.state.w[r] = update_deficit(self.state.w[r], r == j, duration as f64, floor);
            }
            self.state.k += 1;
            out.selections += 1;
            if let Some(s) = sink.as_deref_mut() {
                let _ = s.record(now, "route", &format!("mobile{m}"), j as f64);
            }
            busy[m] = (now + duration, Some((j, pickups)));
            if self.mode == InfoMode::Ideal {
                targets = self.arrival_targets();
            }
            self.track(now as f64, warm, &mut out);
        }
        if let Some(s) = sink {
            for (f, flow) in self.flows.iter().enumerate() {
                for j in 0..routes {
                    if self.net.pickup_rate(flow.source, j) > 0.0 {
                        let subject = format!(
                            "{}->{}@{}",
                            self.net.stationaries[flow.source],
                            self.net.stationaries[flow.dest],
                            self.net.routes[j].name
                        );
                        let _ = s.record(horizon, "split_per_slot", &subject, out.split(f, j));
                    }
                }
            }
            for j in 0..routes {
                let _ = s.record(horizon, "route_fraction", &self.net.routes[j].name, out.fraction(j));
            }
        }
        out
    }

    fn choose(&self, m: usize, candidates: &[usize], time_on: &[f64], elapsed: f64) -> usize {
        if let Some(target) = &self.forced {
            // follow the target fractions: most-behind route first
            let mut best = candidates[0];
            let mut lag = f64::NEG_INFINITY;
            for &j in candidates {
                let d = self.net.routes[j].duration as f64;
                let behind = target[j] * (elapsed + d) - time_on[j];
                if behind > lag + 1e-12 {
                    lag = behind;
                    best = j;
                }
            }
            return best;
        }
        let view = self.view();
        select_route(
            &self.net,
            &self.costs,
            &self.flows,
            &view,
            &self.state.carried[m],
            &self.state.w,
            candidates,
        )
        .expect("candidates are non-empty")
        .route
    }

    fn arrival_targets(&self) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .map(|(f, flow)| {
                stationary_enqueue(&self.net, &self.costs, flow, &self.state.q[f])
                    .expect("checked at construction")
            })
            .collect()
    }

    fn deposit(&mut self, from: u64, to: u64, warm: f64, targets: &mut [usize], out: &mut MobilityRun) {
        if to <= from {
            return;
        }
        match self.mode {
            InfoMode::Ideal => {
                let split = (warm.ceil() as u64).clamp(from, to);
                for f in 0..self.flows.len() {
                    let rate = self.flows[f].rate;
                    let before = self.draw(rate, split - from);
                    let after = self.draw(rate, to - split);
                    self.state.q[f][targets[f]] += before + after;
                    out.deposits[f][targets[f]] += after;
                    out.admitted[f] += after;
                }
            }
            InfoMode::Practical => {
                for t in from..to {
                    let counted = t as f64 >= warm;
                    for f in 0..self.flows.len() {
                        let flow = self.flows[f];
                        let n = self.draw(flow.rate, 1);
                        if n == 0.0 {
                            continue;
                        }
                        let j = stationary_enqueue(&self.net, &self.costs, &flow, &self.state.q[f])
                            .expect("checked at construction");
                        self.state.q[f][j] += n;
                        if counted {
                            out.deposits[f][j] += n;
                            out.admitted[f] += n;
                        }
                    }
                }
            }
        }
    }

    fn finish_route(&mut self, m: usize, j: usize, pickups: &[bool], now: u64, warm: f64, out: &mut MobilityRun) {
        let moves = update_queues(
            &self.net,
            &self.flows,
            &mut self.state.q,
            &mut self.state.carried[m],
            j,
            pickups,
        );
        if now as f64 > warm {
            for (f, n) in moves.picked.iter().enumerate() {
                out.picked[f][j] += n;
            }
            for (d, n) in moves.dropped.iter().enumerate() {
                out.delivered[d] += n;
            }
        }
        let k = self.state.k;
        for f in 0..self.flows.len() {
            if self.net.routes[j].contacts(self.flows[f].source) > 0 {
                let row = self.state.q[f].clone();
                self.snapshot.sync(f, &row, k);
            }
        }
    }

    fn track(&self, now: f64, warm: f64, out: &mut MobilityRun) {
        let stationary: f64 = self.state.q.iter().flatten().sum();
        let mobile: f64 = self.state.carried.iter().flatten().sum();
        let total = stationary + mobile;
        if now < warm {
            out.max_backlog_first_half = out.max_backlog_first_half.max(total);
        } else {
            out.max_backlog_second_half = out.max_backlog_second_half.max(total);
        }
        out.max_q = out.max_q.max(self.state.q.iter().flatten().fold(0.0, |a, &b| a.max(b)));
        out.max_carried = out
            .max_carried
            .max(self.state.carried.iter().flatten().fold(0.0, |a, &b| a.max(b)));
        out.max_w = out.max_w.max(self.state.w.iter().fold(0.0, |a, &b| a.max(b)));
        if let Some(row) = self.state.q.first() {
            out.source_backlog.push((now, row.iter().sum()));
        }
    }
}
