//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use byzcast_core::experiments::{genuine_information, mix_seed, sample_scenario};
use byzcast_core::{make_torus, NodeId, Scenario, Topology};

pub fn torus(n: usize) -> Arc<Topology> {
    Arc::new(make_torus(n).expect("n >= 3"))
}

/// Fault-free scenario with the source in the middle of the lattice.
pub fn fault_free(topology: &Arc<Topology>) -> Scenario {
    let n = (topology.node_count() as f64).sqrt() as usize;
    let centre = NodeId::from((n / 2) * n + n / 2);
    Scenario::new(Arc::clone(topology), centre, [], genuine_information()).expect("valid scenario")
}

/// Random placement at the given Byzantine rate.
pub fn sampled(topology: &Arc<Topology>, lambda: f64, seed: u64) -> Scenario {
    sample_scenario(topology, lambda, mix_seed(seed, 0, 0))
        .expect("rate is small")
        .scenario
}
