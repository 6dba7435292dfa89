//! Brute-force oracles and scenario generators shared by integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use byzcast_core::experiments::genuine_information;
use byzcast_core::{make_grid, make_torus, NodeId, Scenario, Setting, Topology};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every simple path from `origin` of 1..=`max_hops` hops whose vertices
/// after the origin are all `allowed` and whose last vertex is a `target`.
/// Paths are not cut at the first target. Returned as (vertex mask without
/// the origin, hop count).
pub fn all_paths_to_targets(
    topology: &Topology,
    origin: NodeId,
    max_hops: usize,
    target: &dyn Fn(NodeId) -> bool,
    allowed: &dyn Fn(NodeId) -> bool,
) -> Vec<(u64, usize)> {
    assert!(topology.node_count() <= 64);
    struct Walker<'a> {
        t: &'a Topology,
        origin: NodeId,
        max_hops: usize,
        target: &'a dyn Fn(NodeId) -> bool,
        allowed: &'a dyn Fn(NodeId) -> bool,
        out: Vec<(u64, usize)>,
    }
    impl Walker<'_> {
        fn go(&mut self, at: NodeId, mask: u64, hops: usize) {
            if hops == self.max_hops {
                return;
            }
            for &next in self.t.neighbors(at) {
                let bit = 1u64 << next.0;
                if next == self.origin || mask & bit != 0 || !(self.allowed)(next) {
                    continue;
                }
                if (self.target)(next) {
                    self.out.push((mask | bit, hops + 1));
                }
                self.go(next, mask | bit, hops + 1);
            }
        }
    }
    let mut walker = Walker { t: topology, origin, max_hops, target, allowed, out: Vec::new() };
    walker.go(origin, 0, 0);
    walker.out
}

/// Exhaustive search over path families: slot `i` takes any path of at
/// most `bounds[i]` hops, vertex sets pairwise disjoint.
pub fn brute_disjoint_paths(
    topology: &Topology,
    origin: NodeId,
    bounds: &[usize],
    target: &dyn Fn(NodeId) -> bool,
    allowed: &dyn Fn(NodeId) -> bool,
) -> bool {
    let h_max = bounds.iter().copied().max().unwrap_or(0);
    let mut paths = all_paths_to_targets(topology, origin, h_max, target, allowed);
    // Same vertex set: only the shortest hop count matters.
    paths.sort();
    paths.dedup_by(|b, a| a.0 == b.0);
    fn fill(paths: &[(u64, usize)], bounds: &[usize], slot: usize, used: u64) -> bool {
        if slot == bounds.len() {
            return true;
        }
        paths
            .iter()
            .any(|&(m, h)| h <= bounds[slot] && m & used == 0 && fill(paths, bounds, slot + 1, used | m))
    }
    fill(&paths, bounds, 0, 0)
}

pub fn brute_critical(scenario: &Scenario, setting: &Setting, u: NodeId) -> bool {
    if u == scenario.source() {
        return false;
    }
    let source = scenario.source();
    brute_disjoint_paths(
        scenario.topology(),
        u,
        setting.bounds(),
        &|n| scenario.is_byzantine(n),
        &|n| n != source,
    )
}

pub fn brute_safe(scenario: &Scenario, setting: &Setting) -> bool {
    scenario.correct_nodes().all(|u| !brute_critical(scenario, setting, u))
}

/// Naive fixpoint: rescan every outsider until a full pass adds nothing.
pub fn brute_reliable(scenario: &Scenario, setting: &Setting) -> Vec<NodeId> {
    let topology = scenario.topology();
    let mut member = vec![false; topology.node_count()];
    member[scenario.source().index()] = true;
    for &n in topology.neighbors(scenario.source()) {
        if scenario.is_correct(n) {
            member[n.index()] = true;
        }
    }
    loop {
        let mut grew = false;
        for v in scenario.correct_nodes() {
            if member[v.index()] {
                continue;
            }
            let snapshot = member.clone();
            if brute_disjoint_paths(
                topology,
                v,
                setting.bounds(),
                &|n| snapshot[n.index()],
                &|n| scenario.is_correct(n),
            ) {
                member[v.index()] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    topology.nodes().filter(|n| member[n.index()]).collect()
}

/// Small grid, torus or line with at most 25 nodes.
pub fn random_small_topology(rng: &mut ChaCha8Rng) -> Topology {
    match rng.gen_range(0..3) {
        0 => make_grid(rng.gen_range(2..=5)).unwrap(),
        1 => make_torus(rng.gen_range(3..=5)).unwrap(),
        _ => Topology::line(rng.gen_range(2..=25)).unwrap(),
    }
}

pub fn random_setting(rng: &mut ChaCha8Rng) -> Setting {
    if rng.gen_bool(0.6) {
        let presets = Setting::presets();
        presets[rng.gen_range(0..presets.len())].1.clone()
    } else {
        let n = rng.gen_range(1..=3);
        Setting::new((0..n).map(|_| rng.gen_range(1..=4)).collect()).unwrap()
    }
}

/// Source plus up to `max_byzantine` distinct Byzantine nodes.
pub fn random_scenario(rng: &mut ChaCha8Rng, topology: Topology, max_byzantine: usize) -> Scenario {
    let mut nodes: Vec<NodeId> = topology.nodes().collect();
    nodes.shuffle(rng);
    let k = rng.gen_range(0..=max_byzantine.min(nodes.len() - 1));
    let source = nodes[k];
    Scenario::new(Arc::new(topology), source, nodes[..k].to_vec(), genuine_information()).unwrap()
}
