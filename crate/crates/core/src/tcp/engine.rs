use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coding::gf;
use super::router::total;
use super::{
    channel_evolve, channel_transmit, decode_check, path_window_step, router_serve, solve_beta, window_step,
    BetaSolution, Burst, BurstKind, ChannelProfile, ChannelState, CodedReceipt, DecodeMode, Outcome, RouterQueues,
    TcpError, RTO_FACTOR,
};
use crate::sim::{stream_id, stream_rng, MetricsSink, StreamKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// One coded connection over all paths with priority marking.
    #[default]
    Rlc,
    /// An independent AIMD connection per path with an optional static FEC ratio.
    Aimd,
}

/// Marking from the path-diversity analysis, with β from `solve_beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AqmSection {
    pub rho: f64,
}

/// `[tcp]` section of a scenario file. One slot is one RTT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcpScenario {
    #[serde(default)]
    pub transport: Transport,
    pub paths: u32,
    /// Packets per RTT over all paths; each path gets capacity / paths.
    pub capacity: u32,
    /// Low priority coded packets sent per high priority packet.
    #[serde(default = "default_redundancy")]
    pub redundancy: u32,
    /// Coded packets per data packet for the AIMD transport.
    #[serde(default)]
    pub fec: f64,
    #[serde(default = "default_rtt")]
    pub rtt_ms: f64,
    /// Router queues keep up to one RTT of packets between slots.
    #[serde(default = "yes")]
    pub carryover: bool,
    #[serde(default)]
    pub decode: DecodeMode,
    /// Window cap; defaults to four times the capacity.
    #[serde(default)]
    pub w_max: Option<u32>,
    #[serde(default)]
    pub aqm: Option<AqmSection>,
    /// A failed slot in which fewer packets than this arrive times out.
    #[serde(default = "default_dupack")]
    pub dupack_threshold: u32,
    #[serde(default)]
    pub sample_every: Option<u64>,
    #[serde(default = "yes")]
    pub check_invariants: bool,
    pub channel: ChannelProfile,
}

fn default_redundancy() -> u32 {
    19
}

fn default_rtt() -> f64 {
    150.0
}

fn default_dupack() -> u32 {
    3
}

fn yes() -> bool {
    true
}

impl TcpScenario {
    pub fn per_path_capacity(&self) -> u32 {
        self.capacity / self.paths.max(1)
    }

    pub fn validate(&self) -> Result<(), TcpError> {
        let bad = |s: &str| Err(TcpError::Config(s.into()));
        self.channel.validate()?;
        if self.paths < 1 {
            return bad("paths must be at least 1");
        }
        if self.per_path_capacity() < 1 {
            return bad("capacity must give every path at least one packet per RTT");
        }
        if !(self.rtt_ms > 0.0) {
            return bad("rtt_ms must be positive");
        }
        if !(self.fec >= 0.0 && self.fec.is_finite()) {
            return bad("fec must be a non-negative number");
        }
        if self.w_max == Some(0) || self.sample_every == Some(0) {
            return bad("w_max and sample_every must be positive");
        }
        if let Some(a) = self.aqm {
            if !(a.rho > 1.0) {
                return bad("aqm.rho must exceed 1");
            }
        }
        Ok(())
    }

    pub fn engine(&self, seed: u64) -> Result<TcpEngine, TcpError> {
        TcpEngine::new(self.clone(), seed)
    }
}

/// What one path carries in a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub high: Vec<Burst>,
    pub low: Burst,
}

/// Global window W sizes the coding block; each path window w_l sets how
/// many high priority packets that path carries, with r·w_l coded behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathController {
    pub window: u32,
    pub paths: Vec<u32>,
    pub redundancy: u32,
    pub w_max: u32,
}

impl MultipathController {
    pub fn new(paths: usize, redundancy: u32, w_max: u32) -> Self {
        Self { window: 1, paths: vec![1; paths.max(1)], redundancy, w_max }
    }

    /// Data packets go out in order across paths; a path whose share of the
    /// block runs out fills its high priority quota with coded packets.
    pub fn plan(&self, block: u64) -> Vec<PathPlan> {
        let mut cursor = 0u32;
        self.paths
            .iter()
            .map(|&w| {
                let d = w.min(self.window - cursor);
                let mut high = Vec::with_capacity(2);
                if d > 0 {
                    high.push(Burst::data(block, cursor, d));
                }
                if w > d {
                    high.push(Burst::coded(block, w - d));
                }
                cursor += d;
                PathPlan { high, low: Burst::coded(block, self.redundancy.saturating_mul(w)) }
            })
            .collect()
    }

    /// AIMD on every path from its own outcome and on W from the block's.
    /// With one path the path window is W itself.
    pub fn step(&mut self, path_outcomes: &[Outcome], block: Outcome) {
        self.window = window_step(self.window, block).min(self.w_max);
        if self.paths.len() == 1 {
            self.paths[0] = self.window;
        } else {
            for (w, &o) in self.paths.iter_mut().zip(path_outcomes) {
                *w = path_window_step(*w, o).min(self.w_max);
            }
        }
    }

    pub fn timeout(&mut self) {
        self.window = 1;
        if self.paths.len() == 1 {
            self.paths[0] = 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcpRun {
    pub horizon: u64,
    pub window_start: u64,
    /// Delivered data packets per RTT over the measurement window.
    pub goodput: f64,
    /// Goodput over the total capacity.
    pub goodput_fraction: f64,
    pub mean_window: f64,
    pub decode_failure_rate: f64,
    pub timeouts: u64,
    /// Fraction of path-slots in which the router sent its full capacity.
    pub saturation: f64,
}

pub struct TcpEngine {
    pub scenario: TcpScenario,
    seed: u64,
}

struct PathState {
    channel: ChannelState,
    router: RouterQueues,
    chan_rng: ChaCha8Rng,
    rx_rng: ChaCha8Rng,
}

/// A block the receiver is still collecting.
struct OpenBlock {
    id: u64,
    got: Vec<bool>,
    coded: u32,
    vectors: Vec<Vec<u32>>,
}

impl OpenBlock {
    fn new(id: u64, size: u32) -> Self {
        Self { id, got: vec![false; size as usize], coded: 0, vectors: Vec::new() }
    }

    fn size(&self) -> u32 {
        self.got.len() as u32
    }

    fn dof(&self) -> u32 {
        self.got.iter().filter(|g| **g).count() as u32 + self.coded
    }
}

/// One transport connection: its paths, windows and undecoded blocks.
struct Connection {
    paths: Vec<usize>,
    ctrl: MultipathController,
    open: VecDeque<OpenBlock>,
    idle: u32,
}

/// What one connection saw in a slot.
#[derive(Default)]
struct SlotResult {
    goodput: u64,
    failed: u64,
    closed: u64,
    timeout: bool,
}

fn prefix(got: &[bool]) -> u32 {
    got.iter().position(|g| !g).unwrap_or(got.len()) as u32
}

/// Slots the sender waits after a timeout beyond the slot that timed out.
fn idle_after_timeout() -> u32 {
    RTO_FACTOR.ceil() as u32 - 1
}

/// Slots a block may stay undecoded before its retransmission timer fires.
fn rto_slots() -> u64 {
    RTO_FACTOR.ceil() as u64
}

impl TcpEngine {
    pub fn new(scenario: TcpScenario, seed: u64) -> Result<Self, TcpError> {
        scenario.validate()?;
        Ok(Self { scenario, seed })
    }

    fn marking(&self) -> Result<Option<(u32, f64)>, TcpError> {
        let s = &self.scenario;
        let Some(aqm) = s.aqm else { return Ok(None) };
        let c = s.per_path_capacity() as f64;
        let full = s.channel.mean() * s.paths as f64 * c / (aqm.rho * aqm.rho);
        Ok(match solve_beta(s.paths, c, aqm.rho, &s.channel)? {
            BetaSolution::Root(b) => Some((b.floor() as u32, (2.0 / b).min(1.0))),
            BetaSolution::FullDiversity => Some((full.floor() as u32, (1.0 / full).min(1.0))),
            BetaSolution::NoDiversity => None,
        })
    }

    /// High and low priority bursts for each of the connection's paths.
    fn plan(&self, conn: &Connection, block: u64) -> Vec<(Vec<Burst>, Vec<Burst>)> {
        match self.scenario.transport {
            Transport::Rlc => conn.ctrl.plan(block).into_iter().map(|p| (p.high, vec![p.low])).collect(),
            Transport::Aimd => {
                let w = conn.ctrl.window;
                let extra = (self.scenario.fec * w as f64).ceil() as u32;
                vec![(vec![Burst::data(block, 0, w), Burst::coded(block, extra)], Vec::new())]
            }
        }
    }

    fn decodes(&self, b: &OpenBlock) -> Result<bool, TcpError> {
        match self.scenario.decode {
            DecodeMode::Abstract => decode_check(&b.got, CodedReceipt::Count(b.coded)),
            DecodeMode::Field => decode_check(&b.got, CodedReceipt::Vectors(&b.vectors)),
        }
    }

    /// Serve the connection's routers, hand arrivals to open blocks, then
    /// close what decoded or can no longer decode and move the windows.
    #[allow(clippy::too_many_arguments)]
    fn slot(
        &self,
        t: u64,
        conn: &mut Connection,
        paths: &mut [PathState],
        coding_rng: &mut ChaCha8Rng,
        mark: &mut impl FnMut(u32) -> bool,
        saturation: &mut (u64, u64),
    ) -> Result<SlotResult, TcpError> {
        let s = &self.scenario;
        let c = s.per_path_capacity();
        let sending = conn.idle == 0;
        let plans = if sending { self.plan(conn, t) } else { vec![(Vec::new(), Vec::new()); conn.paths.len()] };
        if sending {
            conn.open.push_back(OpenBlock::new(t, conn.ctrl.window));
        }
        let mut arrivals = 0u32;
        let mut path_out = Vec::with_capacity(conn.paths.len());
        for (k, &l) in conn.paths.iter().enumerate() {
            let ps = &mut paths[l];
            let (hi, lo) = router_serve(&mut ps.router, c, &plans[k].0, &plans[k].1);
            saturation.0 += u64::from(total(&hi) + total(&lo) == c);
            saturation.1 += 1;
            let mut received = 0u32;
            for b in hi.iter().chain(&lo) {
                let open = conn.open.iter_mut().find(|o| o.id == b.block);
                received += deliver(b, &ps.channel, &mut ps.rx_rng, open, coding_rng);
            }
            arrivals += received;
            path_out.push(if received >= conn.ctrl.paths[k] { Outcome::Success } else { Outcome::Drop });
        }

        let mut out = SlotResult::default();
        let mut decoded = false;
        let mut failed = false;
        let mut expired = false;
        let mut keep = VecDeque::with_capacity(conn.open.len());
        while let Some(b) = conn.open.pop_front() {
            if self.decodes(&b)? {
                out.goodput += b.size() as u64;
                out.closed += 1;
                decoded = true;
                continue;
            }
            let queued: u32 = conn.paths.iter().map(|&l| paths[l].router.queued(b.id)).sum();
            let late = t - b.id + 1 >= rto_slots();
            if b.dof() + queued < b.size() || late {
                // whatever was received in order is kept; the rest goes again
                out.goodput += prefix(&b.got) as u64;
                out.failed += 1;
                out.closed += 1;
                failed = true;
                expired |= late && b.dof() + queued >= b.size();
                continue;
            }
            keep.push_back(b);
        }
        conn.open = keep;

        if !sending {
            conn.idle -= 1;
            return Ok(out);
        }
        if failed && (arrivals < s.dupack_threshold || expired) {
            conn.ctrl.step(&path_out, Outcome::Drop);
            conn.ctrl.timeout();
            conn.idle = idle_after_timeout();
            out.timeout = true;
        } else if failed {
            conn.ctrl.step(&path_out, Outcome::Drop);
        } else if decoded {
            let o = if mark(conn.ctrl.window) { Outcome::Drop } else { Outcome::Success };
            conn.ctrl.step(&path_out, o);
        }
        Ok(out)
    }

    pub fn run(&self, horizon: u64, mut sink: Option<&mut MetricsSink>) -> Result<TcpRun, TcpError> {
        let s = &self.scenario;
        let m = s.paths as usize;
        let c = s.per_path_capacity();
        let w_max = s.w_max.unwrap_or(4 * s.capacity).max(1);
        let buffer = s.carryover.then_some(c);
        let mut paths: Vec<PathState> = (0..m)
            .map(|l| {
                let mut chan_rng = stream_rng(self.seed, stream_id(StreamKind::Channel, l as u32));
                PathState {
                    channel: ChannelState::new(&s.channel, &mut chan_rng),
                    router: RouterQueues::new(buffer),
                    chan_rng,
                    rx_rng: stream_rng(self.seed, stream_id(StreamKind::Delivery, l as u32)),
                }
            })
            .collect();
        let connection = |paths: Vec<usize>, redundancy| Connection {
            ctrl: MultipathController::new(paths.len(), redundancy, w_max),
            paths,
            open: VecDeque::new(),
            idle: 0,
        };
        let mut conns: Vec<Connection> = match s.transport {
            Transport::Rlc => vec![connection((0..m).collect(), s.redundancy)],
            Transport::Aimd => (0..m).map(|l| connection(vec![l], 0)).collect(),
        };
        let mut coding_rng = stream_rng(self.seed, stream_id(StreamKind::Coding, 0));
        let mut mark_rng = stream_rng(self.seed, stream_id(StreamKind::Misc, 0));
        let marking = self.marking()?;
        let mut mark = |w: u32| match marking {
            Some((limit, f)) => mark_rng.random::<f64>() < if w >= limit { 1.0 } else { f },
            None => false,
        };

        let window_start = horizon / 2;
        let sample_every = s.sample_every.unwrap_or(100);
        let (mut goodput_sum, mut window_sum, mut failures, mut closed) = (0u64, 0u64, 0u64, 0u64);
        let mut timeouts = 0u64;
        let mut saturation = (0u64, 0u64);
        let (mut period_goodput, mut period_failures) = (0u64, 0u64);

        for t in 0..horizon {
            let measuring = t >= window_start;
            let (mut slot_goodput, mut slot_fail, mut slot_closed, mut slot_window) = (0u64, 0u64, 0u64, 0u64);
            let mut sat = (0u64, 0u64);
            for conn in conns.iter_mut() {
                slot_window += conn.ctrl.window as u64;
                let r = self.slot(t, conn, &mut paths, &mut coding_rng, &mut mark, &mut sat)?;
                slot_goodput += r.goodput;
                slot_fail += r.failed;
                slot_closed += r.closed;
                timeouts += u64::from(measuring && r.timeout);
            }
            for ps in paths.iter_mut() {
                channel_evolve(&mut ps.channel, &s.channel, &mut ps.chan_rng, s.rtt_ms);
            }
            if s.check_invariants {
                let windows = conns.iter().flat_map(|cn| std::iter::once(cn.ctrl.window).chain(cn.ctrl.paths.iter().copied()));
                if let Some(w) = windows.into_iter().find(|&w| w < 1 || w > w_max) {
                    return Err(TcpError::Invariant { slot: t, what: format!("window {w} outside [1, {w_max}]") });
                }
            }
            period_goodput += slot_goodput;
            period_failures += slot_fail;
            if measuring {
                goodput_sum += slot_goodput;
                window_sum += slot_window;
                failures += slot_fail;
                closed += slot_closed;
                saturation.0 += sat.0;
                saturation.1 += sat.1;
            }
            if let Some(sink) = sink.as_deref_mut() {
                if (t + 1) % sample_every == 0 {
                    let rec = |e| TcpError::Config(format!("metrics: {e}"));
                    let now = t + 1;
                    if s.transport == Transport::Rlc {
                        sink.record(now, "window", "all", conns[0].ctrl.window as f64).map_err(rec)?;
                    }
                    let path_windows = conns.iter().flat_map(|cn| cn.ctrl.paths.iter().copied());
                    for (l, w) in path_windows.enumerate() {
                        sink.record(now, "path_window", &format!("path_{}", l + 1), w as f64).map_err(rec)?;
                    }
                    sink.record(now, "goodput", "all", period_goodput as f64 / sample_every as f64).map_err(rec)?;
                    sink.record(now, "decode_failures", "all", period_failures as f64).map_err(rec)?;
                    period_goodput = 0;
                    period_failures = 0;
                }
            }
        }
        let span = (horizon - window_start).max(1) as f64;
        let goodput = goodput_sum as f64 / span;
        let run = TcpRun {
            horizon,
            window_start,
            goodput,
            goodput_fraction: goodput / s.capacity as f64,
            mean_window: window_sum as f64 / span,
            decode_failure_rate: if closed > 0 { failures as f64 / closed as f64 } else { 0.0 },
            timeouts,
            saturation: if saturation.1 > 0 { saturation.0 as f64 / saturation.1 as f64 } else { 0.0 },
        };
        if let Some(sink) = sink {
            let rec = |e| TcpError::Config(format!("metrics: {e}"));
            for (name, v) in [
                ("mean_goodput", run.goodput),
                ("goodput_fraction", run.goodput_fraction),
                ("mean_window", run.mean_window),
                ("decode_failure_rate", run.decode_failure_rate),
                ("router_saturation", run.saturation),
                ("timeouts", run.timeouts as f64),
            ] {
                sink.record(horizon, name, "all", v).map_err(rec)?;
            }
        }
        Ok(run)
    }
}

/// Send one burst over the channel; arrivals count toward `open` if the
/// receiver still needs that block. Returns how many packets arrived.
fn deliver(
    b: &Burst,
    state: &ChannelState,
    rng: &mut ChaCha8Rng,
    open: Option<&mut OpenBlock>,
    coding_rng: &mut ChaCha8Rng,
) -> u32 {
    let p = state.p;
    match b.kind {
        BurstKind::Data { first } => {
            let mut n = 0;
            let mut hits = Vec::with_capacity(b.len as usize);
            for k in first..first + b.len {
                if p >= 1.0 || rng.random::<f64>() < p {
                    hits.push(k as usize);
                    n += 1;
                }
            }
            if let Some(o) = open {
                for k in hits {
                    if let Some(g) = o.got.get_mut(k) {
                        *g = true;
                    }
                }
            }
            n
        }
        BurstKind::Coded => {
            let n = channel_transmit(state, b.len, rng);
            if let Some(o) = open {
                o.coded += n;
                // vectors beyond the block size plus a margin cannot change the rank
                let room = (o.size() as usize + 8).saturating_sub(o.vectors.len());
                for _ in 0..(n as usize).min(room) {
                    o.vectors.push(gf::random_vector(o.got.len(), coding_rng));
                }
            }
            n
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_path_controller() {
        let mut c = MultipathController::new(1, 2, 100);
        c.window = 4;
        c.paths[0] = 4;
        let plan = c.plan(7);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].high, vec![Burst::data(7, 0, 4)]);
        assert_eq!(plan[0].low, Burst::coded(7, 8));
        c.step(&[Outcome::Success], Outcome::Success);
        assert_eq!((c.window, c.paths[0]), (5, 5));
        c.step(&[Outcome::Success], Outcome::Drop);
        assert_eq!((c.window, c.paths[0]), (3, 3));
    }

    #[test]
    fn componentwise_aimd() {
        let mut c = MultipathController::new(2, 3, 100);
        c.window = 10;
        c.paths = vec![6, 8];
        let plan = c.plan(0);
        assert_eq!(plan[0].high, vec![Burst::data(0, 0, 6)]);
        assert_eq!(plan[1].high, vec![Burst::data(0, 6, 4), Burst::coded(0, 4)]);
        assert_eq!(plan[1].low, Burst::coded(0, 24));
        c.step(&[Outcome::Success, Outcome::Success], Outcome::Success);
        assert_eq!((c.window, c.paths.clone()), (11, vec![7, 9]));
        // path 2 falls short but path 1's coded packets still decode the block
        c.step(&[Outcome::Success, Outcome::Drop], Outcome::Success);
        assert_eq!((c.window, c.paths.clone()), (12, vec![8, 5]));
    }

    fn scenario(transport: Transport, paths: u32) -> TcpScenario {
        TcpScenario {
            transport,
            paths,
            capacity: 80,
            redundancy: 19,
            fec: 0.0,
            rtt_ms: 150.0,
            carryover: true,
            decode: DecodeMode::Abstract,
            w_max: None,
            aqm: None,
            dupack_threshold: 3,
            sample_every: Some(50),
            check_invariants: true,
            channel: ChannelProfile::bimodal(0.1, 1.0, 0.1, [100.0, 200.0]).unwrap(),
        }
    }

    #[test]
    fn perfect_channel_fills_capacity() {
        let mut s = scenario(Transport::Rlc, 1);
        s.channel = ChannelProfile::bimodal(0.999, 1.0, 0.0, [100.0, 200.0]).unwrap();
        let run = s.engine(1).unwrap().run(4000, None).unwrap();
        assert!(run.goodput_fraction > 0.6, "{run:?}");
    }

    #[test]
    fn deterministic_and_recorded() {
        let s = scenario(Transport::Rlc, 2);
        let mut a = MetricsSink::new("a");
        let mut b = MetricsSink::new("a");
        let ra = s.engine(3).unwrap().run(1000, Some(&mut a)).unwrap();
        let rb = s.engine(3).unwrap().run(1000, Some(&mut b)).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.series("path_window", "path_2").len(), 20);
        let field = TcpScenario { decode: DecodeMode::Field, ..s };
        let rf = field.engine(3).unwrap().run(1000, None).unwrap();
        assert!((rf.goodput - ra.goodput).abs() < 0.1 * ra.goodput + 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut s = scenario(Transport::Rlc, 100);
        assert!(s.validate().is_err());
        s.paths = 2;
        s.aqm = Some(AqmSection { rho: 0.9 });
        assert!(s.engine(0).is_err());
    }
}
