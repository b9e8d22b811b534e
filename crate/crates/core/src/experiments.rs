//! Named experiments: each runs its scenarios and scores the measurements
//! against reference values.

use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::icn::{bpsr_delay_bounds, IcnRun};
use crate::mobility::{reference_lp_solve, supportability_check, Controller, MobilityRun, MobilityScenario};
use crate::scenario::{Model, ScenarioConfig, ScenarioError};
use crate::sim::metrics::sinks_to_csv;
use crate::sim::{stream_id, stream_rng, MetricsSink, StreamKind};
use crate::tcp::{
    rate_function_lprime, simulate_window_chain, solve_beta, steady_state_oracle, throughput_lower_bound,
    BetaSolution, ChannelLevel, ChannelProfile, TcpError, TcpRun, TcpScenario,
};

pub const MOBILITY_EXP1: &str = include_str!("../../../scenarios/mobility_exp1.toml");
pub const MOBILITY_EXP2: &str = include_str!("../../../scenarios/mobility_exp2.toml");
pub const MOBILITY_SIMPLE: &str = include_str!("../../../scenarios/mobility_simple.toml");
pub const ICN_DELAY: &str = include_str!("../../../scenarios/icn_delay.toml");
pub const ICN_LINE: &str = include_str!("../../../scenarios/icn_line.toml");
pub const ICN_SHADOW: &str = include_str!("../../../scenarios/icn_shadow.toml");
pub const TCP_MULTIPATH: &str = include_str!("../../../scenarios/tcp_multipath.toml");
pub const TCP_FIXED_FEC: &str = include_str!("../../../scenarios/tcp_fixed_fec.toml");

/// Every bundled scenario by file stem.
pub const SCENARIOS: [(&str, &str); 8] = [
    ("mobility_exp1", MOBILITY_EXP1),
    ("mobility_exp2", MOBILITY_EXP2),
    ("mobility_simple", MOBILITY_SIMPLE),
    ("icn_delay", ICN_DELAY),
    ("icn_line", ICN_LINE),
    ("icn_shadow", ICN_SHADOW),
    ("tcp_multipath", TCP_MULTIPATH),
    ("tcp_fixed_fec", TCP_FIXED_FEC),
];

/// Experiment ids with their criterion number, in order.
pub const EXPERIMENTS: [(&str, u8); 11] = [
    ("mobility-exp1", 1),
    ("mobility-exp2", 2),
    ("mobility-simple", 3),
    ("icn-delay-scaling", 4),
    ("icn-locality", 5),
    ("icn-rate-control", 6),
    ("icn-shadow", 7),
    ("tcp-multipath", 8),
    ("tcp-oracle", 9),
    ("tcp-analytic", 10),
    ("determinism", 11),
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{id}`; known: {known}", known = EXPERIMENTS.map(|e| e.0).join(", "))]
    Unknown { id: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Setup(String),
}

impl From<TcpError> for ExperimentError {
    fn from(e: TcpError) -> Self {
        ExperimentError::Scenario(e.into())
    }
}

/// One scored measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub what: String,
    pub measured: f64,
    pub expected: String,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub criterion: u8,
    pub id: &'static str,
    pub checks: Vec<Check>,
    pub sinks: Vec<MetricsSink>,
    pub seconds: f64,
    /// Wall-clock allowance in seconds.
    pub budget: f64,
}

impl Report {
    pub fn within_budget(&self) -> bool {
        self.seconds <= self.budget
    }

    pub fn passed(&self) -> bool {
        self.within_budget() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// All metrics of the experiment, one header.
    pub fn csv(&self) -> String {
        sinks_to_csv(&self.sinks)
    }

    /// Table of measured vs expected, one check per line.
    pub fn render(&self) -> String {
        let mut out = format!(
            "[{}] criterion {}: {} ({:.1} s of {:.0} s)\n",
            self.id,
            self.criterion,
            if self.passed() { "PASS" } else { "FAIL" },
            self.seconds,
            self.budget
        );
        for c in &self.checks {
            out += &format!(
                "  {} {:<58} measured {:<12} expected {}\n",
                if c.pass { "ok  " } else { "FAIL" },
                c.what,
                short(c.measured),
                c.expected
            );
        }
        out
    }
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

struct Scorer {
    checks: Vec<Check>,
}

impl Scorer {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn check(&mut self, what: impl Into<String>, measured: f64, expected: impl Into<String>, pass: bool) {
        self.checks.push(Check { what: what.into(), measured, expected: expected.into(), pass });
    }

    /// |measured − target| ≤ rel·|target|
    fn near(&mut self, what: impl Into<String>, measured: f64, target: f64, rel: f64) {
        let pass = (measured - target).abs() <= rel * target.abs();
        self.check(what, measured, format!("{} ± {}%", short(target), rel * 100.0), pass);
    }

    fn at_most(&mut self, what: impl Into<String>, measured: f64, bound: f64) {
        self.check(what, measured, format!("<= {}", short(bound)), measured <= bound);
    }

    fn below(&mut self, what: impl Into<String>, measured: f64, bound: f64) {
        self.check(what, measured, format!("< {}", short(bound)), measured < bound);
    }

    fn at_least(&mut self, what: impl Into<String>, measured: f64, bound: f64) {
        self.check(what, measured, format!(">= {}", short(bound)), measured >= bound);
    }
}

/// Run experiment `id`; `seed` offsets every seed it uses.
pub fn reproduce(id: &str, seed: u64) -> Result<Report, ExperimentError> {
    let &(id, criterion) =
        EXPERIMENTS.iter().find(|e| e.0 == id).ok_or_else(|| ExperimentError::Unknown { id: id.to_string() })?;
    let start = Instant::now();
    let mut scorer = Scorer::new();
    let (sinks, budget) = match id {
        "mobility-exp1" => (mobility_exp1(seed, &mut scorer)?, 10.0),
        "mobility-exp2" => (mobility_exp2(seed, &mut scorer)?, 30.0),
        "mobility-simple" => (mobility_simple(seed, &mut scorer)?, 5.0),
        "icn-delay-scaling" => (icn_delay_scaling(seed, &mut scorer)?, 60.0),
        "icn-locality" => (icn_locality(seed, &mut scorer)?, 60.0),
        "icn-rate-control" => (icn_rate_control(seed, &mut scorer)?, 60.0),
        "icn-shadow" => (icn_shadow(seed, &mut scorer)?, 60.0),
        "tcp-multipath" => (tcp_multipath(seed, &mut scorer)?, 120.0),
        "tcp-oracle" => (tcp_oracle(seed, &mut scorer)?, 30.0),
        "tcp-analytic" => (tcp_analytic(seed, &mut scorer)?, 5.0),
        _ => (determinism(seed, &mut scorer)?, 120.0),
    };
    let mut sinks = sinks;
    let mut summary = MetricsSink::new(format!("{id}/checks"));
    for c in &scorer.checks {
        summary.record(0, "check", &c.what, c.measured).map_err(ScenarioError::from)?;
    }
    sinks.push(summary);
    Ok(Report { criterion, id, checks: scorer.checks, sinks, seconds: start.elapsed().as_secs_f64(), budget })
}

fn config(text: &str, overrides: &[(&str, String)]) -> Result<ScenarioConfig, ScenarioError> {
    let owned: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    ScenarioConfig::from_str_with(text, &owned)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_err(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

// ---- mobility ----

struct MobilityOutcome {
    scenario: MobilityScenario,
    controller: Controller,
    run: MobilityRun,
    sink: MetricsSink,
}

impl MobilityOutcome {
    /// Per-minute values of `per_slot(f, j)` over the (flow, route) pairs that can carry.
    fn entries(&self, per_slot: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let c = &self.controller;
        let mut out = Vec::new();
        for (f, flow) in c.flows.iter().enumerate() {
            for j in 0..c.net.routes.len() {
                if c.net.pickup_rate(flow.source, j) > 0.0 {
                    out.push(self.scenario.per_minute(per_slot(f, j)));
                }
            }
        }
        out
    }

    fn splits(&self) -> Vec<f64> {
        self.entries(|f, j| self.run.split(f, j))
    }
}

fn mobility(text: &str, run_id: String, seed: u64, overrides: &[(&str, String)]) -> Result<MobilityOutcome, ScenarioError> {
    let mut all = vec![("run.id", run_id)];
    all.extend(overrides.iter().cloned());
    let cfg = config(text, &all)?;
    let Model::Mobility(scenario) = cfg.model else {
        return Err(ScenarioError::Shape(0));
    };
    let mut controller = scenario.controller(seed)?;
    let mut sink = MetricsSink::new(cfg.run.id.clone());
    let run = controller.run(cfg.run.horizon, Some(&mut sink));
    Ok(MobilityOutcome { scenario: *scenario, controller, run, sink })
}

/// Shared by both mobility experiments: LP exactness, K-column agreement,
/// and gap to the LP optimum shrinking in K.
fn mobility_table(
    name: &str,
    text: &str,
    lp_expected: &[f64],
    reference_column: &[f64],
    ks: &[u32],
    seeds: u64,
    seed: u64,
    scorer: &mut Scorer,
) -> Result<(Vec<MetricsSink>, Vec<MobilityOutcome>), ExperimentError> {
    let mut sinks = Vec::new();
    let mut last_k = Vec::new();
    let mut gaps: Vec<Vec<f64>> = Vec::new();
    let mut lp_splits: Option<Vec<f64>> = None;
    for &k in ks {
        let mut per_seed = Vec::new();
        let mut outcomes = Vec::new();
        for s in 0..seeds {
            let out = mobility(text, format!("{name}/K{k}/seed{}", seed + s), seed + s, &[("mobility.k", k.to_string())])?;
            if lp_splits.is_none() {
                let c = &out.controller;
                let lp = reference_lp_solve(&c.net, &c.flows, &c.costs).map_err(ScenarioError::from)?;
                lp_splits = Some(out.entries(|f, j| lp.splits[f][j]));
            }
            let lp = lp_splits.as_ref().expect("set above");
            let y = out.splits();
            per_seed.push(y.iter().zip(lp).map(|(a, b)| (a - b).abs()).sum::<f64>());
            outcomes.push(out);
        }
        gaps.push(per_seed);
        sinks.extend(outcomes.iter().map(|o| o.sink.clone()));
        last_k = outcomes;
    }
    let lp = lp_splits.expect("at least one run");
    for (i, (got, want)) in lp.iter().zip(lp_expected).enumerate() {
        scorer.check(format!("LP split {i}"), *got, format!("{want} ± 1e-6"), (got - want).abs() <= 1e-6);
    }
    let k_last = ks[ks.len() - 1];
    let splits: Vec<Vec<f64>> = last_k.iter().map(|o| o.splits()).collect();
    for (i, want) in reference_column.iter().enumerate() {
        let got = mean(&splits.iter().map(|s| s[i]).collect::<Vec<_>>());
        scorer.near(format!("K={k_last} split {i} (mean of {seeds} seeds)"), got, *want, 0.15);
    }
    for w in 0..ks.len() - 1 {
        let (a, b) = (&gaps[w], &gaps[w + 1]);
        let slack = 2.0 * (std_err(a).powi(2) + std_err(b).powi(2)).sqrt();
        scorer.at_most(format!("gap to LP at K={} vs K={} (+2 SE)", ks[w + 1], ks[w]), mean(b), mean(a) + slack);
    }
    Ok((sinks, last_k))
}

fn mobility_exp1(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let lp = [15.0, 25.0, 5.0, 25.0];
    let reference = [15.8, 24.2, 5.97, 24.03];
    // S3 and S4 mirror S1 and S2; only the first cluster is tabulated
    let (sinks, _) = mobility_table("mobility-exp1", MOBILITY_EXP1, &lp, &reference, &[150, 300, 600], 5, seed, scorer)?;
    Ok(sinks)
}

fn mobility_exp2(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let lp = [8.5, 14.5, 5.5, 14.5, 5.5, 14.5, 8.5, 14.5];
    let reference = [8.51, 14.49, 5.4, 14.6, 5.378, 14.622, 8.372, 14.628];
    let (sinks, last) = mobility_table("mobility-exp2", MOBILITY_EXP2, &lp, &reference, &[150, 450, 900], 3, seed, scorer)?;
    let c = &last[0].controller;
    for (j, route) in c.net.routes.iter().enumerate() {
        if route.floor > 0.0 {
            let f = mean(&last.iter().map(|o| o.run.fraction(j)).collect::<Vec<_>>());
            scorer.at_least(format!("time fraction of {}", route.name), f, route.floor - 0.01);
        }
    }
    Ok(sinks)
}

/// Least-squares slope of (x, y) points.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn mobility_simple(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let forced = mobility(
        MOBILITY_SIMPLE,
        "mobility-simple/forced".into(),
        seed,
        &[("mobility.forced_fractions", "[0.5, 0.5]".into())],
    )?;
    let free = mobility(MOBILITY_SIMPLE, "mobility-simple/free".into(), seed, &[])?;
    let c = &free.controller;
    scorer.check(
        "rates supportable with free fractions",
        supportability_check(&c.net, &c.flows, None) as u8 as f64,
        "1",
        supportability_check(&c.net, &c.flows, None),
    );
    let pinned = supportability_check(&c.net, &c.flows, Some(&[0.5, 0.5]));
    scorer.check("rates supportable at f = (0.5, 0.5)", pinned as u8 as f64, "0", !pinned);
    let trace = &forced.run.source_backlog;
    let s = slope(&trace[trace.len() / 2..]);
    scorer.check("S1 backlog slope over last half, forced (pkts/slot)", s, "> 0", s > 0.0);
    scorer.below(
        "max backlog last half / first half, free",
        free.run.max_backlog_second_half / free.run.max_backlog_first_half,
        2.0,
    );
    Ok(vec![forced.sink, free.sink])
}

// ---- icn ----

fn icn(text: &str, run_id: String, seed: u64, overrides: &[(&str, String)]) -> Result<(IcnRun, MetricsSink), ScenarioError> {
    let mut all = vec![("run.id", run_id), ("run.seed", seed.to_string())];
    all.extend(overrides.iter().cloned());
    let cfg = config(text, &all)?;
    let Model::Icn(scenario) = cfg.model else {
        return Err(ScenarioError::Shape(0));
    };
    let mut engine = scenario.engine(seed)?;
    let mut sink = MetricsSink::new(cfg.run.id.clone());
    let run = engine.run(cfg.run.horizon, Some(&mut sink))?;
    Ok((run, sink))
}

const CLUSTER_SIZES: [usize; 3] = [5, 10, 20];
const DELAY_SUPER_SLOT: u64 = 200;

fn delay_runs(algorithm: &str, seed: u64) -> Result<Vec<(usize, IcnRun, MetricsSink)>, ScenarioError> {
    CLUSTER_SIZES
        .iter()
        .map(|&nc| {
            let (run, sink) = icn(
                ICN_DELAY,
                format!("icn-delay/{algorithm}/nc{nc}"),
                seed,
                &[
                    ("icn.algorithm", algorithm.into()),
                    ("icn.super_slot", DELAY_SUPER_SLOT.to_string()),
                    ("icn.topology.source_len", nc.to_string()),
                ],
            )?;
            Ok((nc, run, sink))
        })
        .collect()
}

fn icn_delay_scaling(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let bp = delay_runs("backpressure", seed)?;
    let sr = delay_runs("bp-sr", seed)?;
    let t = DELAY_SUPER_SLOT;
    let delay = |r: &IcnRun| r.flows[0].mean_pickup_delay();
    for (nc, run, _) in &bp {
        let (lo, _) = bpsr_delay_bounds(*nc, t, 0.2, 0.05).map_err(ScenarioError::from)?;
        scorer.at_least(format!("BP pickup delay at Nc={nc} vs lower bound"), delay(run), lo);
    }
    scorer.at_least("BP delay(Nc=20) / delay(Nc=5)", delay(&bp[2].1) / delay(&bp[0].1), 3.0);
    let sr_delays: Vec<f64> = sr.iter().map(|(_, r, _)| delay(r)).collect();
    for (nc, run, _) in &sr {
        let (_, hi) = bpsr_delay_bounds(*nc, t, 0.2, 0.05).map_err(ScenarioError::from)?;
        scorer.at_most(format!("BP+SR pickup delay at Nc={nc}"), delay(run), hi);
    }
    let lo = sr_delays.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sr_delays.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scorer.below("BP+SR delay spread (max - min) / min", (hi - lo) / lo, 0.25);
    Ok(bp.into_iter().chain(sr).map(|x| x.2).collect())
}

fn icn_locality(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let sr = delay_runs("bp-sr", seed)?;
    let tenth = 0.1 * DELAY_SUPER_SLOT as f64;
    for (nc, run, _) in &sr {
        let l = &run.locality;
        scorer.check(format!("Nc={nc}: slots with an internal queue at its hop bound"), l.violations as f64, "0", l.violations == 0);
        scorer.below(format!("Nc={nc}: max internal type-I queue"), l.max_internal_type1 as f64, tenth);
        let outer = l.max_source_backlog.max(l.max_gateway_backlog).max(l.max_mobile_backlog);
        scorer.check(
            format!("Nc={nc}: max source/gateway/mobile queue"),
            outer as f64,
            format!("may exceed {tenth}"),
            true,
        );
    }
    Ok(sr.into_iter().map(|x| x.2).collect())
}

/// Optimum of the line network for utilities K1 log x1 + K2 log x2.
fn line_optimum(k1: f64, k2: f64) -> (f64, f64) {
    let x1 = k1 / (2.0 * (k1 + k2));
    (x1, 1.0 - 2.0 * x1)
}

fn utilities(k1: f64, k2: f64) -> Vec<(&'static str, String)> {
    vec![("icn.flows.0.utility", k1.to_string()), ("icn.flows.1.utility", k2.to_string())]
}

fn icn_rate_control(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let mut sinks = Vec::new();
    for (k1, k2) in [(200.0, 200.0), (800.0, 200.0), (400.0, 200.0)] {
        let (run, sink) = icn(ICN_LINE, format!("icn-line/two-scale/K{k1}-{k2}"), seed, &utilities(k1, k2))?;
        let (o1, o2) = line_optimum(k1, k2);
        let (x1, x2) = (run.data_rate(0), run.data_rate(1));
        scorer.near(format!("K=({k1},{k2}) inter-cluster rate x1"), x1, o1, 0.15);
        scorer.near(format!("K=({k1},{k2}) intra-cluster rate x2"), x2, o2, 0.15);
        scorer.near(format!("K=({k1},{k2}) ratio x2/x1"), x2 / x1, o2 / o1, 0.20);
        sinks.push(sink);
    }
    let mut bp = utilities(200.0, 200.0);
    bp.push(("icn.algorithm", "backpressure".into()));
    bp.push(("run.horizon", "400000".into()));
    let (run, sink) = icn(ICN_LINE, "icn-line/backpressure/K200-200".into(), seed, &bp)?;
    let (o1, _) = line_optimum(200.0, 200.0);
    scorer.below("plain BP inter-cluster rate / optimum", run.data_rate(0) / o1, 0.5);
    sinks.push(sink);
    Ok(sinks)
}

fn icn_shadow(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let (plain, plain_sink) = icn(ICN_LINE, "icn-shadow/none".into(), seed, &utilities(200.0, 200.0))?;
    // admissions carry one shadow per two data packets, so aim admissions
    // at 1.5 times the plain data rate
    let target = 1.5 * plain.data_rate(0);
    if !(target > 0.0 && target < 0.5) {
        return Err(ExperimentError::Setup(format!("no utility gives admission rate {target}")));
    }
    let k1 = 2.0 * 200.0 * target / (1.0 - 2.0 * target);
    let (shadow, shadow_sink) = icn(
        ICN_SHADOW,
        "icn-shadow/one-in-three".into(),
        seed,
        &[("icn.flows.0.utility", k1.to_string()), ("icn.flows.1.utility", "200.0".into())],
    )?;
    scorer.near("data rate with shadows / without", shadow.data_rate(0) / plain.data_rate(0), 1.0, 0.15);
    scorer.at_least(
        "inter-cluster delay without / with shadows",
        plain.flows[0].mean_delay() / shadow.flows[0].mean_delay(),
        5.0,
    );
    scorer.at_least("useful fraction of admissions", shadow.data_rate(0) / shadow.admitted_rate(0), 0.6);
    Ok(vec![plain_sink, shadow_sink])
}

// ---- tcp ----

fn tcp(text: &str, run_id: String, seed: u64, overrides: &[(&str, String)]) -> Result<(TcpScenario, TcpRun, MetricsSink), ScenarioError> {
    let mut all = vec![("run.id", run_id), ("run.seed", seed.to_string())];
    all.extend(overrides.iter().cloned());
    let cfg = config(text, &all)?;
    let Model::Tcp(scenario) = cfg.model else {
        return Err(ScenarioError::Shape(0));
    };
    let mut sink = MetricsSink::new(cfg.run.id.clone());
    let run = scenario.engine(seed)?.run(cfg.run.horizon, Some(&mut sink))?;
    Ok((*scenario, run, sink))
}

const PATH_COUNTS: [u32; 4] = [1, 2, 4, 8];

fn tcp_multipath(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let seeds = 3;
    let mut sinks = Vec::new();
    let mut rlc = Vec::new();
    let mut aimd = Vec::new();
    let mut expected_p = 0.0;
    for transport in ["rlc", "aimd"] {
        for m in PATH_COUNTS {
            let mut fractions = Vec::new();
            for s in 0..seeds {
                let (sc, run, sink) = tcp(
                    TCP_MULTIPATH,
                    format!("tcp-multipath/{transport}/M{m}/seed{}", seed + s),
                    seed + s,
                    &[("tcp.transport", transport.into()), ("tcp.paths", m.to_string())],
                )?;
                expected_p = sc.channel.mean();
                fractions.push(run.goodput_fraction);
                sinks.push(sink);
            }
            if transport == "rlc" { &mut rlc } else { &mut aimd }.push(mean(&fractions));
        }
    }
    for w in 0..PATH_COUNTS.len() - 1 {
        scorer.at_least(
            format!("RLC goodput/C at M={} vs M={}", PATH_COUNTS[w + 1], PATH_COUNTS[w]),
            rlc[w + 1],
            rlc[w],
        );
    }
    scorer.at_least("RLC goodput at M=8 / (E[P] C)", rlc[3] / expected_p, 0.8);
    for (m, a) in PATH_COUNTS.iter().zip(&aimd) {
        scorer.below(format!("AIMD goodput/C at M={m}"), *a, 0.3);
    }
    // static FEC: the window stays bounded but shrinks as the bad state grows
    let mut windows = Vec::new();
    for good in [0.9, 0.5, 0.1] {
        let (_, run, sink) = tcp(
            TCP_FIXED_FEC,
            format!("tcp-fixed-fec/good{good}"),
            seed,
            &[
                ("tcp.channel.levels.0.weight", (1.0 - good).to_string()),
                ("tcp.channel.levels.1.weight", good.to_string()),
            ],
        )?;
        windows.push((good, run.mean_window));
        sinks.push(sink);
    }
    for w in windows.windows(2) {
        scorer.below(format!("AIMD+FEC mean window at good fraction {} vs {}", w[1].0, w[0].0), w[1].1, w[0].1);
    }
    scorer.below("AIMD+FEC mean window at good fraction 0.9", windows[0].1, 100.0);
    Ok(sinks)
}

fn tcp_oracle(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let w_max = 400;
    let mut sink = MetricsSink::new("tcp-oracle");
    for (i, f) in [0.3, 0.1, 0.01].into_iter().enumerate() {
        let oracle = steady_state_oracle(|_| f, w_max)?;
        let mut rng = stream_rng(seed, stream_id(StreamKind::Misc, i as u32));
        let sim = simulate_window_chain(|_| f, w_max, 10_000_000, &mut rng);
        let subject = format!("f{f}");
        sink.record(0, "oracle_mean_window", &subject, oracle.mean).map_err(ScenarioError::from)?;
        sink.record(0, "simulated_mean_window", &subject, sim).map_err(ScenarioError::from)?;
        scorer.near(format!("f={f}: simulated E[W] vs oracle {:.3}", oracle.mean), sim, oracle.mean, 0.05);
    }
    Ok(vec![sink])
}

fn random_profile(rng: &mut impl Rng) -> Result<ChannelProfile, TcpError> {
    let n = rng.random_range(2..=4);
    let mut ps: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=1.0)).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let raw: Vec<f64> = ps.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let levels = ps.iter().zip(&raw).map(|(&p, &w)| ChannelLevel { p, weight: w / total }).collect();
    ChannelProfile::new(levels, [100.0, 200.0])
}

fn tcp_analytic(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let rho = 1.1;
    let mut sink = MetricsSink::new("tcp-analytic");
    let (mut worst_residual, mut roots, mut worst_excess) = (0.0f64, 0, f64::NEG_INFINITY);
    for p1 in [0.1, 0.3] {
        let profile = ChannelProfile::bimodal(p1, 1.0, 0.1, [100.0, 200.0])?;
        for m in [1u32, 2, 4, 8, 16] {
            for c in [25.0, 50.0, 100.0, 200.0, 400.0] {
                let subject = format!("p1={p1},M={m},C={c}");
                let mc = m as f64 * c;
                if let BetaSolution::Root(beta) = solve_beta(m, c, rho, &profile)? {
                    let h = m as f64 * rate_function_lprime(1.0 - rho * beta / mc, &profile) - beta.ln();
                    // relative error of 1/β = exp(−M l′)
                    let residual = ((-h).exp() - 1.0).abs();
                    worst_residual = worst_residual.max(residual);
                    roots += 1;
                    sink.record(0, "beta", &subject, beta).map_err(ScenarioError::from)?;
                }
                let bound = throughput_lower_bound(m, c, rho, &profile, 0.0, 0.0)?;
                let cap = profile.mean() * mc / (rho * rho);
                worst_excess = worst_excess.max(bound - cap);
                sink.record(0, "throughput_lower_bound", &subject, bound).map_err(ScenarioError::from)?;
            }
        }
    }
    scorer.check("grid points with a root", roots as f64, ">= 1", roots >= 1);
    scorer.below("worst relative residual of the beta root", worst_residual, 1e-8);
    scorer.at_most("worst bound - E[P] MC / rho^2 over the grid", worst_excess, 0.0);
    let mut rng = stream_rng(seed, stream_id(StreamKind::Misc, 99));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let profile = random_profile(&mut rng)?;
        worst = worst.max(rate_function_lprime(1.0 - profile.mean(), &profile).abs());
    }
    scorer.below("max l'(1 - E[P]) over 20 random profiles", worst, 1e-9);
    Ok(vec![sink])
}

/// Every bundled scenario, shortened, run twice: here and on another thread.
fn determinism(seed: u64, scorer: &mut Scorer) -> Result<Vec<MetricsSink>, ExperimentError> {
    let mut sinks = Vec::new();
    for (name, text) in SCENARIOS {
        let cfg = config(text, &[("run.seed", seed.to_string())])?;
        // two independent runs at full horizon, one per thread
        let (here, there) = std::thread::scope(|s| {
            let a = s.spawn(|| cfg.run());
            let b = s.spawn(|| cfg.run());
            (a.join(), b.join())
        });
        let panicked = |_| ExperimentError::Setup(format!("{name}: worker panicked"));
        let (here, there) = (here.map_err(panicked)??.sink, there.map_err(panicked)??);
        let same = here.to_csv() == there.sink.to_csv();
        scorer.check(format!("{name}: CSV identical across runs"), here.len() as f64, "identical", same);
        sinks.push(here);
    }
    Ok(sinks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id_lists_known() {
        let e = reproduce("nope", 1).unwrap_err().to_string();
        assert!(e.contains("mobility-exp1") && e.contains("determinism"), "{e}");
    }

    #[test]
    fn bundled_scenarios_parse() {
        for (name, text) in SCENARIOS {
            let cfg = ScenarioConfig::from_str_with(text, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|x| (x as f64, 3.0 * x as f64 + 1.0)).collect();
        assert!((slope(&pts) - 3.0).abs() < 1e-12);
    }
}
