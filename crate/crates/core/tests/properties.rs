//! Property tests for the model invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twoscale::bp::{maxweight_schedule, Candidate, InterferenceModel, Scheduler};
use twoscale::scenario::{Model, ScenarioConfig, ScenarioDoc};
use twoscale::sim::{LinkId, NodeId};
use twoscale::tcp::{
    decode_check, f_eff, gf, router_serve, window_step, Burst, CodedReceipt, Outcome, RouterQueues,
};

const TCP: &str = include_str!("../../../scenarios/tcp_multipath.toml");
const ICN: &str = include_str!("../../../scenarios/icn_line.toml");

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::Success), Just(Outcome::Drop)]
}

proptest! {
    #[test]
    fn aimd_stays_positive_and_moves_by_the_rule(w in 1u32..100_000, o in outcome()) {
        let next = window_step(w, o);
        prop_assert!(next >= 1);
        match o {
            Outcome::Success => prop_assert_eq!(next, w + 1),
            Outcome::Drop => prop_assert!(next == w.div_ceil(2) && next <= w),
        }
    }

    #[test]
    fn effective_halving_probability_is_a_probability(a in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let f = f_eff(a, c);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(f >= a.max(c) - 1e-12);
    }

    /// Nothing is created inside the router: sent plus queued plus shed equals offered.
    #[test]
    fn router_conserves_packets(
        cap in 1u32..40,
        buffer in proptest::option::of(0u32..40),
        slots in proptest::collection::vec((0u32..30, 0u32..60), 1..20),
    ) {
        let mut q = RouterQueues::new(buffer);
        let (mut offered, mut sent) = (0u64, 0u64);
        for (t, (hi, lo)) in slots.into_iter().enumerate() {
            let before = (q.high_len() + q.low_len()) as u64;
            let (h, l) = router_serve(&mut q, cap, &[Burst::data(t as u64, 0, hi)], &[Burst::coded(t as u64, lo)]);
            let out: u64 = h.iter().chain(&l).map(|b| b.len as u64).sum();
            prop_assert!(out <= cap as u64);
            prop_assert!(out <= before + (hi + lo) as u64);
            // low priority only goes out once the high queue is empty
            if !l.is_empty() {
                prop_assert_eq!(q.high_len(), 0);
            }
            if let Some(b) = buffer {
                prop_assert!(q.high_len() <= b && q.low_len() <= b);
            } else {
                prop_assert_eq!(q.high_len() + q.low_len(), 0);
            }
            offered += (hi + lo) as u64;
            sent += out;
            prop_assert!(sent + (q.high_len() + q.low_len()) as u64 <= offered);
        }
    }

    /// Receiving more never turns a decodable block undecodable, and the
    /// field check never decodes what the counting check rejects.
    #[test]
    fn decoding_is_monotone(
        got in proptest::collection::vec(any::<bool>(), 1..24),
        coded in 0usize..30,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<Vec<u32>> = (0..coded).map(|_| gf::random_vector(got.len(), &mut rng)).collect();
        let mut prev_count = false;
        let mut prev_field = false;
        for k in 0..=coded {
            let by_count = decode_check(&got, CodedReceipt::Count(k as u32)).unwrap();
            let by_field = decode_check(&got, CodedReceipt::Vectors(&vectors[..k])).unwrap();
            prop_assert!(by_count || !prev_count);
            prop_assert!(by_field || !prev_field);
            prop_assert!(by_count || !by_field);
            prev_count = by_count;
            prev_field = by_field;
        }
        let missing = got.iter().filter(|g| !**g).count();
        prop_assert_eq!(prev_count, coded >= missing);
    }

    /// A node-exclusive schedule is a matching of positive-weight candidates,
    /// and the exact solver never does worse than greedy.
    #[test]
    fn maxweight_schedules_are_feasible(
        raw in proptest::collection::vec((0u32..8, 0u32..8, 1u32..4, -5.0f64..20.0), 0..14),
    ) {
        let cands: Vec<Candidate> = raw
            .iter()
            .enumerate()
            .filter(|(_, (a, b, _, _))| a != b)
            .map(|(i, &(a, b, rate, weight))| Candidate {
                link: LinkId(i as u32),
                from: NodeId(a),
                to: NodeId(b),
                rate,
                commodity: NodeId(0),
                weight,
            })
            .collect();
        let value = |s: &[Candidate]| s.iter().map(|c| c.weight * c.rate as f64).sum::<f64>();
        let mut best = Vec::new();
        for sched in [Scheduler::Greedy, Scheduler::Exact] {
            let chosen = maxweight_schedule(&cands, &InterferenceModel::NodeExclusive(sched));
            let mut used = std::collections::HashSet::new();
            for c in &chosen {
                prop_assert!(c.weight > 0.0);
                prop_assert!(used.insert(c.from) && used.insert(c.to), "node used twice");
            }
            best.push(value(&chosen));
        }
        prop_assert!(best[1] >= best[0] - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Every ICN packet created is either delivered or still held somewhere.
    #[test]
    fn icn_conserves_packets(seed in any::<u64>(), horizon in 1u64..6_000) {
        let sc = ScenarioConfig::from_str_with(ICN, &[]).unwrap();
        let Model::Icn(s) = &sc.model else { unreachable!() };
        let run = s.engine(seed).unwrap().run(horizon, None).unwrap();
        prop_assert_eq!(run.created, run.delivered + run.in_network);
    }

    /// The engine's own window check holds for any seed and path count.
    #[test]
    fn tcp_windows_stay_in_bounds(seed in any::<u64>(), paths in 1u32..9, transport in prop_oneof![Just("rlc"), Just("aimd")]) {
        let o = [("tcp.paths".to_string(), paths.to_string()), ("tcp.transport".to_string(), transport.to_string())];
        let sc = ScenarioConfig::from_str_with(TCP, &o).unwrap();
        let Model::Tcp(s) = &sc.model else { unreachable!() };
        let run = s.engine(seed).unwrap().run(2_000, None).unwrap();
        prop_assert!(run.goodput >= 0.0 && run.goodput <= s.capacity as f64 + 1e-9);
        prop_assert!((0.0..=1.0).contains(&run.decode_failure_rate));
    }

    /// An override reads back as the value it set.
    #[test]
    fn overrides_round_trip(paths in 1u32..64, horizon in 0u64..1_000_000, p in 0.01f64..1.0) {
        let mut doc = ScenarioDoc::parse(TCP).unwrap();
        doc.set("tcp.paths", &paths.to_string()).unwrap();
        doc.set("run.horizon", &horizon.to_string()).unwrap();
        doc.set("tcp.channel.levels.0.p", &format!("{p:?}")).unwrap();
        let sc = doc.typed().unwrap();
        let Model::Tcp(s) = &sc.model else { unreachable!() };
        prop_assert_eq!((s.paths, sc.run.horizon, s.channel.levels[0].p), (paths, horizon, p));
    }
}
