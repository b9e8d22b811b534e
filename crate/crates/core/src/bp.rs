//! Back-pressure machinery: packet queues, link weights, MaxWeight scheduling
//! and the utility-based source rate controller.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sim::{LinkId, NodeId, TopologyGraph};

/// A packet with the header fields the routing algorithms read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub flow: u32,
    pub created: u64,
    pub dest: NodeId,
    pub src_gateway: Option<NodeId>,
    pub dst_gateway: Option<NodeId>,
    /// Gateway the carrying mobile received this packet from.
    pub last_gateway: Option<NodeId>,
    /// Shadow packets only hold back-pressure and are discarded on delivery.
    pub shadow: bool,
    pub picked_at: Option<u64>,
}

/// FIFO queue with strict priority of data packets over shadow packets.
#[derive(Debug, Clone, Default)]
pub struct PacketQueue {
    blue: VecDeque<Packet>,
    red: VecDeque<Packet>,
}

impl PacketQueue {
    pub fn len(&self) -> usize {
        self.blue.len() + self.red.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blue.is_empty() && self.red.is_empty()
    }

    pub fn blue_len(&self) -> usize {
        self.blue.len()
    }

    pub fn red_len(&self) -> usize {
        self.red.len()
    }

    pub fn push(&mut self, p: Packet) {
        if p.shadow {
            self.red.push_back(p)
        } else {
            self.blue.push_back(p)
        }
    }

    pub fn pop(&mut self) -> Option<Packet> {
        self.blue.pop_front().or_else(|| self.red.pop_front())
    }

    /// Serve up to `budget` packets, data first.
    pub fn serve(&mut self, budget: usize) -> Vec<Packet> {
        let mut out = Vec::with_capacity(budget.min(self.len()));
        while out.len() < budget {
            match self.pop() {
                Some(p) => out.push(p),
                None => break,
            }
        }
        out
    }

    /// Serve up to `budget` packets that pass `allow`; refused packets keep their order.
    pub fn serve_filtered(&mut self, budget: usize, allow: impl Fn(&Packet) -> bool) -> Vec<Packet> {
        let mut out = Vec::new();
        for q in [&mut self.blue, &mut self.red] {
            if out.len() >= budget {
                break;
            }
            let mut kept = VecDeque::with_capacity(q.len());
            while let Some(p) = q.pop_front() {
                if out.len() < budget && allow(&p) {
                    out.push(p);
                } else {
                    kept.push_back(p);
                }
            }
            *q = kept;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.blue.iter().chain(self.red.iter())
    }
}

/// Split of a service budget between data and shadow packets.
pub fn shadow_serve(blue: usize, red: usize, budget: usize) -> (usize, usize) {
    let b = blue.min(budget);
    (b, red.min(budget - b))
}

/// Dense per-node, per-commodity packet queues.
#[derive(Debug, Clone)]
pub struct PerDestQueues {
    nodes: usize,
    queues: Vec<PacketQueue>,
}

impl PerDestQueues {
    pub fn new(nodes: usize) -> Self {
        Self { nodes, queues: vec![PacketQueue::default(); nodes * nodes] }
    }

    pub fn get(&self, at: NodeId, commodity: NodeId) -> &PacketQueue {
        &self.queues[at.index() * self.nodes + commodity.index()]
    }

    pub fn get_mut(&mut self, at: NodeId, commodity: NodeId) -> &mut PacketQueue {
        &mut self.queues[at.index() * self.nodes + commodity.index()]
    }

    pub fn len(&self, at: NodeId, commodity: NodeId) -> usize {
        self.get(at, commodity).len()
    }

    /// Total packets held anywhere.
    pub fn total(&self) -> usize {
        self.queues.iter().map(PacketQueue::len).sum()
    }

    pub fn node_total(&self, at: NodeId) -> usize {
        let s = at.index() * self.nodes;
        self.queues[s..s + self.nodes].iter().map(PacketQueue::len).sum()
    }
}

/// Commodity with the largest queue differential over a link, and that differential.
/// Ties go to the lowest commodity id; `None` only when there are no commodities.
pub fn backpressure_weights(
    commodities: &[NodeId],
    sender: impl Fn(NodeId) -> f64,
    receiver: impl Fn(NodeId) -> f64,
) -> Option<(NodeId, f64)> {
    let mut best: Option<(NodeId, f64)> = None;
    for &c in commodities {
        let w = sender(c) - receiver(c);
        match best {
            Some((bc, bw)) if w < bw || (w == bw && c > bc) => {}
            _ => best = Some((c, w)),
        }
    }
    best
}

/// Which link sets may be active together.
#[derive(Debug, Clone, PartialEq)]
pub enum InterferenceModel {
    /// No two active links share a node.
    NodeExclusive(Scheduler),
    /// Active links must lie inside one of the listed sets.
    IndependentSets(Vec<Vec<LinkId>>),
}

impl InterferenceModel {
    /// Every link of the topology may be active at once.
    pub fn all_links(topo: &TopologyGraph) -> Self {
        Self::IndependentSets(vec![topo.links().iter().map(|l| l.id).collect()])
    }
}

/// How the node-exclusive MaxWeight problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheduler {
    /// Heaviest-first maximal matching.
    Greedy,
    /// Exact: dynamic program on path clusters, exhaustive search up to 16 links, greedy beyond.
    Exact,
}

/// A link eligible for activation this slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub rate: u32,
    pub commodity: NodeId,
    pub weight: f64,
}

impl Candidate {
    fn value(&self) -> f64 {
        self.weight * self.rate as f64
    }
}

/// Activation set maximizing Σ rate·weight under the model. Non-positive weights never activate.
pub fn maxweight_schedule(candidates: &[Candidate], model: &InterferenceModel) -> Vec<Candidate> {
    let positive: Vec<Candidate> = candidates.iter().copied().filter(|c| c.weight > 0.0).collect();
    if positive.is_empty() {
        return Vec::new();
    }
    let mut chosen = match model {
        InterferenceModel::NodeExclusive(Scheduler::Greedy) => greedy_matching(&positive),
        InterferenceModel::NodeExclusive(Scheduler::Exact) => {
            path_matching(&positive).unwrap_or_else(|| {
                if positive.len() <= 16 {
                    exhaustive_matching(&positive)
                } else {
                    greedy_matching(&positive)
                }
            })
        }
        InterferenceModel::IndependentSets(family) => {
            let mut best: (f64, Vec<Candidate>) = (0.0, Vec::new());
            for set in family {
                let members: Vec<Candidate> =
                    positive.iter().copied().filter(|c| set.contains(&c.link)).collect();
                let v: f64 = members.iter().map(Candidate::value).sum();
                if v > best.0 {
                    best = (v, members);
                }
            }
            best.1
        }
    };
    chosen.sort_by_key(|c| c.link);
    chosen
}

fn conflicts(a: &Candidate, b: &Candidate) -> bool {
    a.from == b.from || a.from == b.to || a.to == b.from || a.to == b.to
}

fn greedy_matching(c: &[Candidate]) -> Vec<Candidate> {
    let mut order: Vec<Candidate> = c.to_vec();
    order.sort_by(|a, b| b.value().total_cmp(&a.value()).then(a.link.cmp(&b.link)));
    let mut chosen: Vec<Candidate> = Vec::new();
    for cand in order {
        if chosen.iter().all(|x| !conflicts(x, &cand)) {
            chosen.push(cand);
        }
    }
    chosen
}

fn exhaustive_matching(c: &[Candidate]) -> Vec<Candidate> {
    fn go(i: usize, c: &[Candidate], cur: &mut Vec<usize>, val: f64, best: &mut (f64, Vec<usize>)) {
        if i == c.len() {
            if val > best.0 {
                *best = (val, cur.clone());
            }
            return;
        }
        if cur.iter().all(|&k| !conflicts(&c[k], &c[i])) {
            cur.push(i);
            go(i + 1, c, cur, val + c[i].value(), best);
            cur.pop();
        }
        go(i + 1, c, cur, val, best);
    }
    let mut best = (0.0, Vec::new());
    go(0, c, &mut Vec::new(), 0.0, &mut best);
    best.1.into_iter().map(|k| c[k]).collect()
}

/// Exact matching when the candidate links form a simple path (either direction per edge).
fn path_matching(c: &[Candidate]) -> Option<Vec<Candidate>> {
    use std::collections::BTreeMap;
    // best candidate per undirected edge
    let mut edges: BTreeMap<(NodeId, NodeId), Candidate> = BTreeMap::new();
    for &cand in c {
        let key = if cand.from < cand.to { (cand.from, cand.to) } else { (cand.to, cand.from) };
        let e = edges.entry(key).or_insert(cand);
        if cand.value() > e.value() || (cand.value() == e.value() && cand.link < e.link) {
            *e = cand;
        }
    }
    let mut degree: BTreeMap<NodeId, Vec<(NodeId, NodeId)>> = BTreeMap::new();
    for &(a, b) in edges.keys() {
        degree.entry(a).or_default().push((a, b));
        degree.entry(b).or_default().push((a, b));
    }
    if degree.values().any(|v| v.len() > 2) {
        return None;
    }
    // walk each path component from an end
    let mut seen: BTreeMap<(NodeId, NodeId), bool> = BTreeMap::new();
    let mut chosen = Vec::new();
    let ends: Vec<NodeId> = degree.iter().filter(|(_, v)| v.len() == 1).map(|(n, _)| *n).collect();
    for start in ends {
        let mut order = Vec::new();
        let mut at = start;
        loop {
            let next = degree[&at].iter().find(|e| !seen.contains_key(*e)).copied();
            let Some(e) = next else { break };
            seen.insert(e, true);
            order.push(edges[&e]);
            at = if e.0 == at { e.1 } else { e.0 };
        }
        if order.is_empty() {
            continue;
        }
        // best[i]: optimum over the first i edges
        let n = order.len();
        let mut best = vec![0.0; n + 1];
        best[1] = order[0].value();
        for i in 2..=n {
            best[i] = best[i - 1].max(best[i - 2] + order[i - 1].value());
        }
        let mut i = n;
        while i > 0 {
            if best[i] == best[i - 1] {
                i -= 1;
            } else {
                chosen.push(order[i - 1]);
                i = i.saturating_sub(2);
            }
        }
    }
    if seen.len() != edges.len() {
        // a cycle remains
        return None;
    }
    Some(chosen)
}

/// Source with utility K·log(x) and a queue-price rate controller.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFlow {
    pub utility: f64,
    /// Estimated admitted rate, packets per slot.
    pub rate: f64,
    pub batch: u32,
    pub beta: f64,
    pub interval: u64,
}

impl UtilityFlow {
    /// The estimate starts at one batch per decision so the marginal utility is finite.
    pub fn new(utility: f64, batch: u32, beta: f64, interval: u64) -> Self {
        let interval = interval.max(1);
        Self { utility, rate: batch as f64 / interval as f64, batch, beta, interval }
    }

    pub fn decide(&self, local_queue: f64) -> u32 {
        rate_control_step(self.utility, self.rate, self.beta, local_queue, self.batch)
    }

    pub fn observe(&mut self, admitted: u32) {
        self.rate = rate_estimate_update(self.rate, admitted, self.interval);
    }
}

/// Admit `batch` packets iff K/x − β·q > 0.
pub fn rate_control_step(utility: f64, rate: f64, beta: f64, queue: f64, batch: u32) -> u32 {
    if utility / rate - beta * queue > 0.0 {
        batch
    } else {
        0
    }
}

pub fn rate_estimate_update(rate: f64, admitted: u32, interval: u64) -> f64 {
    0.999 * rate + 0.001 * (admitted as f64 / interval as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn weight_examples() {
        let d = n(9);
        let w = backpressure_weights(&[d], |_| 10.0, |_| 4.0).unwrap();
        assert_eq!(w, (d, 6.0));
        let w = backpressure_weights(&[n(5), n(3)], |_| 1.0, |_| 1.0).unwrap();
        assert_eq!(w, (n(3), 0.0));
        let (d1, d2) = (n(1), n(2));
        let qm = |c: NodeId| if c == d1 { 3.0 } else { 9.0 };
        let qn = |c: NodeId| if c == d1 { 0.0 } else { 8.0 };
        assert_eq!(backpressure_weights(&[d1, d2], qm, qn).unwrap(), (d1, 3.0));
    }

    fn cand(link: u32, from: u32, to: u32, weight: f64) -> Candidate {
        Candidate { link: LinkId(link), from: n(from), to: n(to), rate: 1, commodity: n(0), weight }
    }

    #[test]
    fn schedules() {
        let ne = InterferenceModel::NodeExclusive(Scheduler::Exact);
        assert!(maxweight_schedule(&[cand(0, 0, 1, 0.0)], &ne).is_empty());
        // 3-node line a-b-c with only a holding packets
        let s = maxweight_schedule(&[cand(0, 0, 1, 5.0), cand(1, 1, 2, 0.0)], &ne);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].link, LinkId(0));
        // weights 6,1,6 on a 4-node line
        let c = [cand(0, 0, 1, 6.0), cand(1, 1, 2, 1.0), cand(2, 2, 3, 6.0)];
        for m in [ne.clone(), InterferenceModel::NodeExclusive(Scheduler::Greedy)] {
            let s = maxweight_schedule(&c, &m);
            let links: Vec<_> = s.iter().map(|c| c.link.0).collect();
            assert_eq!(links, vec![0, 2]);
        }
        // greedy misses the optimum on 2,3,2; exact does not
        let c = [cand(0, 0, 1, 2.0), cand(1, 1, 2, 3.0), cand(2, 2, 3, 2.0)];
        let exact: f64 = maxweight_schedule(&c, &ne).iter().map(|c| c.weight).sum();
        assert_eq!(exact, 4.0);
        let greedy: f64 = maxweight_schedule(&c, &InterferenceModel::NodeExclusive(Scheduler::Greedy))
            .iter()
            .map(|c| c.weight)
            .sum();
        assert_eq!(greedy, 3.0);
    }

    #[test]
    fn rate_control_examples() {
        assert_eq!(rate_control_step(200.0, 10.0, 1.0, 5.0, 3), 3);
        assert_eq!(rate_control_step(200.0, 10.0, 1.0, 0.0, 3), 3);
        assert_eq!(rate_control_step(200.0, 10.0, 1.0, 20.0, 3), 0);
        assert!((rate_estimate_update(0.0, 3, 1) - 0.003).abs() < 1e-15);
        assert!((rate_estimate_update(1.0, 0, 1) - 0.999).abs() < 1e-15);
        let mut x = 0.0;
        for _ in 0..20000 {
            x = rate_estimate_update(x, 2, 4);
        }
        assert!((x - 0.5).abs() < 1e-6);
    }

    #[test]
    fn shadow_priority() {
        assert_eq!(shadow_serve(5, 5, 5), (5, 0));
        assert_eq!(shadow_serve(2, 5, 5), (2, 3));
        let mut q = PacketQueue::default();
        let p = |id, shadow| Packet {
            id,
            flow: 0,
            created: 0,
            dest: n(0),
            src_gateway: None,
            dst_gateway: None,
            last_gateway: None,
            shadow,
            picked_at: None,
        };
        q.push(p(1, true));
        q.push(p(2, false));
        q.push(p(3, false));
        let ids: Vec<_> = q.serve(2).iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![2, 3]);
        assert_eq!(q.pop().unwrap().id, 1);
    }
}
