//! Parameterizable Byzantine-tolerant broadcast for sparse multihop
//! networks.
//!
//! A correct node delivers a value once it holds `n` copies whose visited
//! sets are pairwise disjoint, copy `i` having crossed at most `H_i` nodes.
//! The crate provides:
//!
//! * [`topology`]: graphs, grid/torus generators, edge-list files, path
//!   enumeration;
//! * [`protocol`]: the per-node state machine;
//! * [`simulator`]: seeded asynchronous execution with Byzantine adversaries;
//! * [`analyzer`]: the safety condition and the reliable node set;
//! * [`experiments`]: the Monte Carlo harness and its CSV output.

pub mod analyzer;
pub mod experiments;
pub mod protocol;
pub mod simulator;
pub mod topology;

pub use analyzer::{
    check_safety, check_safety_with, find_disjoint_bounded_paths, is_critical, reliable_closure,
    reliable_set, AnalysisError, PathWitness, ReliableSet, SafetyReport, SafetyScan,
};
pub use experiments::{
    run_sweep, sample_scenario, trial, unsecured_baseline, wilson_interval, ExperimentConfig,
    ExperimentError, Outcome, ResultRow, TopologyKind, UnsafePolicy,
};
pub use protocol::{
    check_delivery, source_init, Information, Message, NodeState, ProtocolError, Setting,
    StepOutput, VisitedSet,
};
pub use simulator::{count_bound, run, Adversary, Injection, Scenario, ScenarioError, SimError, Trace};
pub use topology::{
    enumerate_paths, load_topology, make_grid, make_torus, save_topology, NodeId, NodeSet, Path,
    Topology, TopologyError,
};
