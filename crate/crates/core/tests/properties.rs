mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use byzcast_core::experiments::{format_sig6, genuine_information, read_csv, write_csv};
use byzcast_core::topology::lattice_node;
use byzcast_core::{
    check_delivery, check_safety, enumerate_paths, is_critical, load_topology, make_grid, make_torus,
    reliable_set, run, save_topology, wilson_interval, Adversary, Information, Message, NodeId, NodeSet,
    NodeState, ResultRow, Scenario, Setting, Topology, TopologyKind, Trace, VisitedSet,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn visited_set() -> impl Strategy<Value = VisitedSet> {
    subsequence((0u32..9).collect::<Vec<_>>(), 0..=4)
        .prop_map(|v| v.into_iter().map(NodeId).collect::<VisitedSet>())
}

fn setting() -> impl Strategy<Value = Setting> {
    prop::collection::vec(1usize..=4, 1..=4).prop_map(|b| Setting::new(b).unwrap())
}

/// Any assignment of entries to slots, repeats allowed, checked literally.
fn brute_delivery(entries: &[VisitedSet], bounds: &[usize]) -> bool {
    fn go(entries: &[VisitedSet], bounds: &[usize], chosen: &mut Vec<VisitedSet>) -> bool {
        if chosen.len() == bounds.len() {
            return true;
        }
        let slot = chosen.len();
        for e in entries {
            if e.len() <= bounds[slot] && chosen.iter().all(|c| c.is_disjoint(e)) {
                chosen.push(e.clone());
                if go(entries, bounds, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    go(entries, bounds, &mut Vec::new())
}

fn small_topology() -> impl Strategy<Value = Topology> {
    prop_oneof![
        (1usize..=5).prop_map(|n| make_grid(n).unwrap()),
        (3usize..=5).prop_map(|n| make_torus(n).unwrap()),
        (2usize..=16).prop_map(|n| Topology::line(n).unwrap()),
    ]
}

/// Topology, source and Byzantine set drawn from one shuffled node order.
fn small_scenario() -> impl Strategy<Value = (Scenario, Setting)> {
    (small_topology(), any::<u64>(), setting(), 0usize..6).prop_map(|(t, salt, s, k)| {
        let mut nodes: Vec<NodeId> = t.nodes().collect();
        nodes.sort_by_key(|n| byzcast_core::experiments::mix_seed(salt, u64::from(n.0), 0));
        let k = k.min(nodes.len() - 1);
        let scenario = Scenario::new(Arc::new(t), nodes[k], nodes[..k].to_vec(), genuine_information()).unwrap();
        (scenario, s)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grid_and_torus_degree_laws(n in 1usize..=12) {
        let grid = make_grid(n).unwrap();
        prop_assert_eq!(grid.node_count(), n * n);
        prop_assert_eq!(grid.edge_count(), 2 * n * (n - 1));
        for r in 0..n {
            for c in 0..n {
                let border = [r == 0, r == n - 1, c == 0, c == n - 1].iter().filter(|&&b| b).count();
                let expected = if n == 1 { 0 } else { 4 - border };
                prop_assert_eq!(grid.degree(lattice_node(n, r, c)), expected);
            }
        }
        if n >= 3 {
            let torus = make_torus(n).unwrap();
            prop_assert_eq!(torus.edge_count(), 2 * n * n);
            prop_assert!(torus.nodes().all(|v| torus.degree(v) == 4));
        }
    }

    #[test]
    fn save_then_load_is_identity(t in small_topology()) {
        let text = save_topology(&t);
        let back = load_topology(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(save_topology(&back), text);
    }

    #[test]
    fn enumerated_paths_are_simple_bounded_and_few(t in small_topology(), k in 0usize..=4, pick in any::<u32>()) {
        let origin = NodeId(pick % t.node_count() as u32);
        let banned = NodeSet::with_capacity(t.node_count());
        let d = t.max_degree();
        let bound: usize = (1..=k).map(|j| d.pow(j as u32)).sum();
        let mut count = 0;
        let mut seen = BTreeSet::new();
        for p in enumerate_paths(&t, origin, k, |_| true, &banned) {
            count += 1;
            prop_assert!(p.is_valid_in(&t));
            prop_assert!(p.hops() <= k);
            prop_assert_eq!(p.origin(), Some(origin));
            prop_assert!(seen.insert(p.nodes().to_vec()));
        }
        prop_assert!(count <= bound + 1);
    }

    #[test]
    fn delivery_rule_matches_brute_force(entries in prop::collection::vec(visited_set(), 0..=12), s in setting()) {
        let got = check_delivery(&entries, &s);
        prop_assert_eq!(got.is_some(), brute_delivery(&entries, s.bounds()));
        if let Some(w) = got {
            prop_assert_eq!(w.len(), s.arity());
            for (i, set) in w.iter().enumerate() {
                prop_assert!(set.len() <= s.bounds()[i]);
                prop_assert!(set.is_empty() || entries.contains(set));
                for other in &w[i + 1..] {
                    prop_assert!(set.is_disjoint(other));
                }
            }
        }
    }

    #[test]
    fn delivery_rule_ignores_bound_order(entries in prop::collection::vec(visited_set(), 0..=12), s in setting()) {
        let mut reversed = s.bounds().to_vec();
        reversed.reverse();
        let r = Setting::new(reversed).unwrap();
        prop_assert_eq!(check_delivery(&entries, &s).is_some(), check_delivery(&entries, &r).is_some());
    }

    #[test]
    fn incremental_delivery_agrees_with_full_check(
        msgs in prop::collection::vec((1u32..=6, subsequence((7u32..15).collect::<Vec<_>>(), 0..=3), 0u8..2), 1..40),
        s in setting(),
    ) {
        let neighbors: Vec<NodeId> = (1..=6).map(NodeId).collect();
        let mut node = NodeState::new(NodeId(0), &neighbors, NodeId(99));
        for (sender, visited, which) in msgs {
            let info = Information::new([b'a' + which]);
            let msg = Message { info: info.clone(), visited: visited.into_iter().map(NodeId).collect() };
            let before = node.clone();
            let out = node.on_receive(&s, NodeId(sender), &msg).unwrap();
            for v in [Information::new("a"), Information::new("b")] {
                let full = node.rec().get(&v).is_some_and(|e| check_delivery(e, &s).is_some());
                prop_assert_eq!(node.has_delivered(&v), full);
            }
            prop_assert!(out.new_deliveries.len() <= 1);
            // Replaying the same message changes nothing.
            let mut again = node.clone();
            prop_assert!(again.on_receive(&s, NodeId(sender), &msg).unwrap().is_empty());
            prop_assert_eq!(&again, &node);
            prop_assert!(before.rec_len() <= node.rec_len());
        }
    }

    #[test]
    fn adding_a_byzantine_node_keeps_critical_nodes_critical((scenario, s) in small_scenario(), extra in any::<u32>()) {
        let topology = scenario.shared_topology();
        let candidates: Vec<NodeId> = scenario.correct_nodes().filter(|&n| n != scenario.source()).collect();
        prop_assume!(!candidates.is_empty());
        let added = candidates[extra as usize % candidates.len()];
        let more = Scenario::new(
            Arc::clone(topology),
            scenario.source(),
            scenario.byzantine().iter().chain([added]),
            genuine_information(),
        ).unwrap();
        for u in more.correct_nodes() {
            if is_critical(&scenario, &s, u).unwrap().is_some() {
                prop_assert!(is_critical(&more, &s, u).unwrap().is_some());
            }
        }
        // With both placements safe, the larger one has the smaller
        // reliable set.
        if check_safety(&more, &s).safe && check_safety(&scenario, &s).safe {
            let small = reliable_set(&more, &s).unwrap();
            let large = reliable_set(&scenario, &s).unwrap();
            prop_assert!(small.members.iter().all(|v| large.contains(v)));
        }
    }

    #[test]
    fn reliable_set_matches_naive_fixpoint((scenario, s) in small_scenario()) {
        match reliable_set(&scenario, &s) {
            Ok(set) => {
                prop_assert!(common::brute_safe(&scenario, &s));
                prop_assert_eq!(set.members.iter().collect::<Vec<_>>(), common::brute_reliable(&scenario, &s));
                prop_assert!(set.members.iter().all(|v| scenario.is_correct(v)));
            }
            Err(_) => prop_assert!(!common::brute_safe(&scenario, &s)),
        }
    }

    #[test]
    fn trace_text_round_trips((scenario, s) in small_scenario(), seed in any::<u64>()) {
        let trace = run(&scenario, &s, &Adversary::Forge(Information::new("m'")), seed, 200_000).unwrap();
        let text = trace.to_text();
        prop_assert_eq!(Trace::parse(&text).unwrap(), trace);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let successes = (frac * trials as f64).round() as u64;
        let (lo, hi) = wilson_interval(successes, trials, conf).unwrap();
        let p = successes as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        let (lo4, hi4) = wilson_interval(successes * 4, trials * 4, conf).unwrap();
        prop_assert!(hi4 - lo4 <= hi - lo + 1e-12);
    }

    #[test]
    fn csv_output_is_stable_under_reparse(
        rows in prop::collection::vec((0.0f64..1.0, 1u64..10_000, 0.0f64..=1.0, 0.0f64..=1.0, 0u64..50), 1..6),
    ) {
        let rows: Vec<ResultRow> = rows
            .into_iter()
            .map(|(lambda, trials, p, q, resampled)| ResultRow {
                kind: TopologyKind::Torus,
                size: 50,
                setting: "1-3-3".to_owned(),
                lambda,
                trials_used: trials,
                p_deliver: p,
                p_deliver_ci: (p * 0.9, p.max(0.5)),
                p_safe: q,
                p_safe_ci: (q * 0.5, q),
                resampled,
            })
            .collect();
        let text = write_csv(&rows).unwrap();
        let back = read_csv(&text).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.trials_used, b.trials_used);
            prop_assert_eq!(format_sig6(a.lambda), format_sig6(b.lambda));
            prop_assert!((a.p_deliver - b.p_deliver).abs() <= 5e-6 * b.p_deliver.abs().max(1e-300));
        }
        prop_assert_eq!(write_csv(&back).unwrap(), text);
    }
}

#[test]
fn silent_fault_free_runs_reach_the_whole_torus() {
    let topology = Arc::new(make_torus(6).unwrap());
    for (_, s) in Setting::presets() {
        let scenario = Scenario::new(Arc::clone(&topology), NodeId(7), [], genuine_information()).unwrap();
        for seed in 0..5 {
            let trace = run(&scenario, &s, &Adversary::Silent, seed, u64::MAX).unwrap();
            assert!(trace.quiescent);
            assert!(topology.nodes().all(|v| trace.delivered(v, &genuine_information())));
        }
    }
}
