use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use twoscale::bp::{maxweight_schedule, Candidate, InterferenceModel, Scheduler};
use twoscale::scenario::{Model, ScenarioConfig};
use twoscale::sim::{LinkId, NodeId};
use twoscale::tcp::{rate_function_lprime, ChannelProfile, Transport};

const TCP: &str = include_str!("../../../scenarios/tcp_multipath.toml");

/// A chain of `n` nodes with both directions of every hop eligible.
fn chain(n: u32) -> Vec<Candidate> {
    (0..n - 1)
        .flat_map(|i| {
            [(i, i + 1), (i + 1, i)].into_iter().enumerate().map(move |(d, (a, b))| Candidate {
                link: LinkId(2 * i + d as u32),
                from: NodeId(a),
                to: NodeId(b),
                rate: 1,
                commodity: NodeId(n - 1),
                weight: ((i * 7 + d as u32 * 3) % 11) as f64 + 1.0,
            })
        })
        .collect()
}

fn maxweight(c: &mut Criterion) {
    let cands = chain(20);
    for (name, sched) in [("maxweight/greedy", Scheduler::Greedy), ("maxweight/exact", Scheduler::Exact)] {
        let model = InterferenceModel::NodeExclusive(sched);
        c.bench_function(name, |b| b.iter(|| maxweight_schedule(black_box(&cands), &model)));
    }
}

fn tcp_slots(c: &mut Criterion) {
    let sc = ScenarioConfig::from_str_with(TCP, &[]).unwrap();
    let Model::Tcp(s) = sc.model else { unreachable!() };
    for (name, transport) in [("rlc", Transport::Rlc), ("aimd", Transport::Aimd)] {
        let mut s = (*s).clone();
        s.transport = transport;
        let engine = s.engine(1).unwrap();
        c.bench_function(&format!("tcp/{name}/1000-slots"), |b| b.iter(|| engine.run(black_box(1_000), None).unwrap()));
    }
}

fn lprime(c: &mut Criterion) {
    let profile = ChannelProfile::bimodal(0.1, 1.0, 0.1, [100.0, 200.0]).unwrap();
    c.bench_function("lprime", |b| b.iter(|| rate_function_lprime(black_box(0.5), &profile)));
}

criterion_group!(benches, maxweight, tcp_slots, lprime);
criterion_main!(benches);
