//! Omniscient-observer analysis of a scenario.
//!
//! Both the safety condition and the reliable-set construction reduce to
//! the same question: from a focal node, are there `n` paths, path `i` of
//! at most `H_i` hops ending on a target node, whose vertex sets (focal
//! node excluded) are pairwise disjoint?
//!
//! The source never relays anything and never delivers anything but its
//! own value, so it is excluded from `Critical` witnesses: it cannot be the
//! focal node and cannot sit on a forging path. With that exclusion the
//! predicate is exact for the implemented protocol: no correct node can
//! deliver a forgery unless some node is critical, and a critical node
//! always ends up delivering one under the forging adversary.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{Setting, VisitedSet};
use crate::simulator::Scenario;
use crate::topology::{NodeId, NodeSet, Path, Topology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("node {0} is Byzantine; criticality is defined for correct nodes only")]
    ByzantineFocal(NodeId),
    #[error("scenario is unsafe (node {0} is critical); reliable sets are undefined")]
    Unsafe(NodeId),
    #[error("report line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// `n` paths from a focal node, in the setting's declared order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathWitness {
    pub focal: NodeId,
    pub paths: Vec<Path>,
}

impl PathWitness {
    /// Vertex set of each path with the focal node removed.
    pub fn visited_sets(&self) -> Vec<VisitedSet> {
        self.paths
            .iter()
            .map(|p| p.nodes()[1..].iter().copied().collect())
            .collect()
    }

    pub fn targets(&self) -> Vec<NodeId> {
        self.paths.iter().filter_map(Path::end).collect()
    }

    /// Re-checks every witness invariant from scratch.
    pub fn verify<T, A>(&self, topology: &Topology, bounds: &[usize], target: T, allowed: A) -> bool
    where
        T: Fn(NodeId) -> bool,
        A: Fn(NodeId) -> bool,
    {
        if self.paths.len() != bounds.len() {
            return false;
        }
        let shape_ok = self.paths.iter().zip(bounds).all(|(path, &bound)| {
            path.is_valid_in(topology)
                && path.origin() == Some(self.focal)
                && (1..=bound).contains(&path.hops())
                && path.end().is_some_and(&target)
                && path.nodes()[1..].iter().all(|&n| allowed(n))
        });
        if !shape_ok {
            return false;
        }
        let sets = self.visited_sets();
        sets.iter()
            .enumerate()
            .all(|(i, a)| sets[i + 1..].iter().all(|b| a.is_disjoint(b)))
    }
}

impl fmt::Display for PathWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :", self.focal)?;
        for (i, path) in self.paths.iter().enumerate() {
            if i > 0 {
                f.write_str(" |")?;
            }
            write!(f, " {path}")?;
        }
        Ok(())
    }
}

fn parse_witness(text: &str) -> Option<PathWitness> {
    let (focal, rest) = text.split_once(':')?;
    let focal = NodeId(focal.trim().parse().ok()?);
    let paths = rest
        .split('|')
        .map(|p| {
            p.split_whitespace()
                .map(|n| n.parse().map(NodeId))
                .collect::<Result<Vec<_>, _>>()
                .map(Path::new)
        })
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    Some(PathWitness { focal, paths })
}

/// Reusable BFS buffers stamped by epoch so repeated searches on a large
/// topology do not reallocate per call.
struct Scratch {
    stamp: Vec<u32>,
    parent: Vec<NodeId>,
    epoch: u32,
    queue: VecDeque<(NodeId, usize)>,
}

impl Scratch {
    fn new(node_count: usize) -> Self {
        Scratch {
            stamp: vec![0; node_count],
            parent: vec![NodeId(0); node_count],
            epoch: 0,
            queue: VecDeque::new(),
        }
    }

    fn begin(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        self.queue.clear();
    }

    #[inline]
    fn mark(&mut self, node: NodeId) -> bool {
        let slot = &mut self.stamp[node.index()];
        let fresh = *slot != self.epoch;
        *slot = self.epoch;
        fresh
    }

    /// Shortest path (ties broken by ascending neighbor order) from `focal`
    /// to a target within `limit` hops, avoiding `used`. Targets are not
    /// expanded.
    fn nearest_target<T, A>(
        &mut self,
        topology: &Topology,
        focal: NodeId,
        limit: usize,
        used: &NodeSet,
        target: &T,
        allowed: &A,
    ) -> Option<Vec<NodeId>>
    where
        T: Fn(NodeId) -> bool,
        A: Fn(NodeId) -> bool,
    {
        self.begin();
        self.mark(focal);
        self.queue.push_back((focal, 0));
        while let Some((node, dist)) = self.queue.pop_front() {
            if dist == limit {
                continue;
            }
            for &next in topology.neighbors(node) {
                if used.contains(next) || !allowed(next) || !self.mark(next) {
                    continue;
                }
                self.parent[next.index()] = node;
                if target(next) {
                    let mut path = vec![next];
                    let mut at = next;
                    while at != focal {
                        at = self.parent[at.index()];
                        path.push(at);
                    }
                    path.reverse();
                    return Some(path);
                }
                self.queue.push_back((next, dist + 1));
            }
        }
        None
    }
}

/// Exact search for `n` bounded paths from `focal` to target nodes with
/// pairwise disjoint vertex sets (focal excluded). `target` and `allowed`
/// constrain non-focal vertices only.
///
/// Paths never continue through a target: cutting a path at its first
/// target keeps it within bound and shrinks its vertex set, so nothing is
/// lost. Slots are filled in ascending bound order by depth-first
/// backtracking; the last slot is a shortest-path query.
pub fn find_disjoint_bounded_paths<T, A>(
    topology: &Topology,
    focal: NodeId,
    bounds: &[usize],
    target: T,
    allowed: A,
) -> Option<PathWitness>
where
    T: Fn(NodeId) -> bool,
    A: Fn(NodeId) -> bool,
{
    let mut scratch = Scratch::new(topology.node_count());
    find_with(&mut scratch, topology, focal, bounds, &target, &allowed)
}

fn find_with<T, A>(
    scratch: &mut Scratch,
    topology: &Topology,
    focal: NodeId,
    bounds: &[usize],
    target: &T,
    allowed: &A,
) -> Option<PathWitness>
where
    T: Fn(NodeId) -> bool,
    A: Fn(NodeId) -> bool,
{
    if bounds.is_empty() {
        return Some(PathWitness {
            focal,
            paths: Vec::new(),
        });
    }
    // Each path starts with a distinct neighbor of the focal node.
    let usable = topology
        .neighbors(focal)
        .iter()
        .filter(|&&n| allowed(n))
        .count();
    if usable < bounds.len() {
        return None;
    }
    let mut slots: Vec<usize> = (0..bounds.len()).collect();
    slots.sort_by_key(|&i| (bounds[i], i));
    let nearest = bounds[slots[0]];
    let empty = NodeSet::default();
    scratch.nearest_target(topology, focal, nearest, &empty, target, allowed)?;

    let mut search = WitnessSearch {
        topology,
        focal,
        bounds,
        slots: &slots,
        target,
        allowed,
        used: NodeSet::with_capacity(topology.node_count()),
        paths: vec![Vec::new(); bounds.len()],
        scratch,
    };
    search.fill(0, None).then(|| PathWitness {
        focal,
        paths: search.paths.into_iter().map(Path::new).collect(),
    })
}

struct WitnessSearch<'a, T, A> {
    topology: &'a Topology,
    focal: NodeId,
    bounds: &'a [usize],
    slots: &'a [usize],
    target: &'a T,
    allowed: &'a A,
    // committed vertex sets plus the interior of the path being built
    used: NodeSet,
    paths: Vec<Vec<NodeId>>,
    scratch: &'a mut Scratch,
}

impl<T, A> WitnessSearch<'_, T, A>
where
    T: Fn(NodeId) -> bool,
    A: Fn(NodeId) -> bool,
{
    /// `after`: first hop of the previous slot when it has the same bound;
    /// interchangeable slots are filled in increasing first-hop order.
    fn fill(&mut self, pos: usize, after: Option<NodeId>) -> bool {
        if pos == self.slots.len() {
            return true;
        }
        let remaining = self.slots.len() - pos;
        let free = self
            .topology
            .neighbors(self.focal)
            .iter()
            .filter(|&&n| !self.used.contains(n) && (self.allowed)(n))
            .count();
        if free < remaining {
            return false;
        }
        let slot = self.slots[pos];
        let bound = self.bounds[slot];

        if remaining == 1 {
            let found = self.scratch.nearest_target(
                self.topology,
                self.focal,
                bound,
                &self.used,
                self.target,
                self.allowed,
            );
            return match found {
                Some(path) => {
                    self.paths[slot] = path;
                    true
                }
                None => false,
            };
        }

        let mut path = vec![self.focal];
        self.extend(pos, slot, bound, after, &mut path)
    }

    fn extend(
        &mut self,
        pos: usize,
        slot: usize,
        bound: usize,
        after: Option<NodeId>,
        path: &mut Vec<NodeId>,
    ) -> bool {
        let tail = *path.last().expect("path holds the focal node");
        let topology = self.topology;
        for &next in topology.neighbors(tail) {
            if next == self.focal || self.used.contains(next) || !(self.allowed)(next) {
                continue;
            }
            if path.len() == 1 && after.is_some_and(|a| next <= a) {
                continue;
            }
            path.push(next);
            self.used.insert(next);
            let done = if (self.target)(next) {
                let next_after = match self.slots.get(pos + 1) {
                    Some(&s) if self.bounds[s] == bound => Some(path[1]),
                    _ => None,
                };
                let ok = self.fill(pos + 1, next_after);
                if ok {
                    self.paths[slot] = path.clone();
                }
                ok
            } else if path.len() <= bound {
                self.extend(pos, slot, bound, after, path)
            } else {
                false
            };
            if done {
                return true;
            }
            self.used.remove(next);
            path.pop();
        }
        false
    }
}

/// `Critical(u)`: `n` distinct Byzantine nodes reachable from `u` over
/// paths of at most `H_i` hops with pairwise disjoint vertex sets. Returns
/// the witness when it holds. Always `None` for the source.
pub fn is_critical(
    scenario: &Scenario,
    setting: &Setting,
    u: NodeId,
) -> Result<Option<PathWitness>, AnalysisError> {
    let mut scratch = Scratch::new(scenario.topology().node_count());
    critical_with(&mut scratch, scenario, setting, u)
}

fn critical_with(
    scratch: &mut Scratch,
    scenario: &Scenario,
    setting: &Setting,
    u: NodeId,
) -> Result<Option<PathWitness>, AnalysisError> {
    if scenario.is_byzantine(u) {
        return Err(AnalysisError::ByzantineFocal(u));
    }
    if u == scenario.source() || scenario.byzantine().len() < setting.arity() {
        return Ok(None);
    }
    let source = scenario.source();
    Ok(find_with(
        scratch,
        scenario.topology(),
        u,
        setting.bounds(),
        &|n| scenario.is_byzantine(n),
        &|n| n != source,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SafetyScan {
    /// Collect a witness for every critical node.
    All,
    /// Stop at the first critical node.
    FirstViolation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyReport {
    pub safe: bool,
    pub violations: Vec<PathWitness>,
}

impl SafetyReport {
    /// `safety SAFE|UNSAFE`, then one `violation <witness>` line per
    /// critical node.
    pub fn to_text(&self) -> String {
        let mut out = format!("safety {}\n", if self.safe { "SAFE" } else { "UNSAFE" });
        for w in &self.violations {
            let _ = writeln!(out, "violation {w}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut safe = None;
        let mut violations = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |reason: &str| AnalysisError::Parse {
                line: i + 1,
                reason: reason.to_owned(),
            };
            match line.split_once(' ') {
                Some(("safety", "SAFE")) => safe = Some(true),
                Some(("safety", "UNSAFE")) => safe = Some(false),
                Some(("violation", rest)) => {
                    violations.push(parse_witness(rest).ok_or_else(|| err("bad witness"))?)
                }
                _ => {}
            }
        }
        let safe = safe.ok_or(AnalysisError::Parse {
            line: 1,
            reason: "missing safety line".to_owned(),
        })?;
        Ok(SafetyReport { safe, violations })
    }
}

pub fn check_safety(scenario: &Scenario, setting: &Setting) -> SafetyReport {
    check_safety_with(scenario, setting, SafetyScan::All)
}

/// Safe iff no correct node is critical. With at most `n - 1` Byzantine
/// nodes no node can be, and the search is skipped.
pub fn check_safety_with(scenario: &Scenario, setting: &Setting, scan: SafetyScan) -> SafetyReport {
    let mut report = SafetyReport {
        safe: true,
        violations: Vec::new(),
    };
    if scenario.byzantine().len() < setting.arity() {
        return report;
    }
    let topology = scenario.topology();
    let source = scenario.source();
    let closest = *setting.bounds().iter().min().expect("setting is nonempty");

    // Distance to the nearest Byzantine node over source-free paths; only
    // nodes within the smallest bound can be critical.
    let mut dist: Vec<Option<usize>> = vec![None; topology.node_count()];
    let mut queue = VecDeque::new();
    for b in scenario.byzantine().iter() {
        dist[b.index()] = Some(0);
        queue.push_back(b);
    }
    while let Some(node) = queue.pop_front() {
        let d = dist[node.index()].unwrap_or(0);
        if d == closest {
            continue;
        }
        for &next in topology.neighbors(node) {
            if next != source && dist[next.index()].is_none() {
                dist[next.index()] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }

    let mut scratch = Scratch::new(topology.node_count());
    for u in topology.nodes() {
        if scenario.is_byzantine(u) || u == source || dist[u.index()].is_none() {
            continue;
        }
        if let Some(w) = critical_with(&mut scratch, scenario, setting, u).expect("u is correct") {
            report.safe = false;
            report.violations.push(w);
            if scan == SafetyScan::FirstViolation {
                break;
            }
        }
    }
    report
}

/// Reliable node set: the source, its correct neighbors, and every node
/// added by the closure rule, each with the witness that admitted it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReliableSet {
    pub members: NodeSet,
    pub seed: Vec<NodeId>,
    pub witnesses: BTreeMap<NodeId, PathWitness>,
}

impl ReliableSet {
    pub fn contains(&self, node: NodeId) -> bool {
        self.members.contains(node)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `reliable <count>`, `members ...`, `seed ...`, then one
    /// `witness <witness>` line per non-seed member, ascending.
    pub fn to_text(&self) -> String {
        let join = |it: &mut dyn Iterator<Item = NodeId>| {
            it.map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
        };
        let mut out = format!("reliable {}\n", self.members.len());
        let _ = writeln!(out, "members {}", join(&mut self.members.iter()));
        let _ = writeln!(out, "seed {}", join(&mut self.seed.iter().copied()));
        for w in self.witnesses.values() {
            let _ = writeln!(out, "witness {w}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let ids = |s: &str, line: usize| {
            s.split_whitespace()
                .map(|n| n.parse().map(NodeId))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| AnalysisError::Parse {
                    line,
                    reason: "bad node id".to_owned(),
                })
        };
        let mut count = None;
        let mut members = NodeSet::default();
        let mut seed = Vec::new();
        let mut witnesses = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "reliable" => count = rest.trim().parse::<usize>().ok(),
                "members" => members = ids(rest, i + 1)?.into_iter().collect_set(),
                "seed" => seed = ids(rest, i + 1)?,
                "witness" => {
                    let w = parse_witness(rest).ok_or(AnalysisError::Parse {
                        line: i + 1,
                        reason: "bad witness".to_owned(),
                    })?;
                    witnesses.insert(w.focal, w);
                }
                _ => {}
            }
        }
        match count {
            Some(c) if c == members.len() => Ok(ReliableSet {
                members,
                seed,
                witnesses,
            }),
            _ => Err(AnalysisError::Parse {
                line: 1,
                reason: "missing or inconsistent member count".to_owned(),
            }),
        }
    }
}

trait CollectSet {
    fn collect_set(self) -> NodeSet;
}

impl<I: Iterator<Item = NodeId>> CollectSet for I {
    fn collect_set(self) -> NodeSet {
        let mut set = NodeSet::default();
        for n in self {
            set.insert(n);
        }
        set
    }
}

/// Largest reliable node set of a safe scenario.
pub fn reliable_set(scenario: &Scenario, setting: &Setting) -> Result<ReliableSet, AnalysisError> {
    let report = check_safety_with(scenario, setting, SafetyScan::FirstViolation);
    if let Some(w) = report.violations.first() {
        return Err(AnalysisError::Unsafe(w.focal));
    }
    Ok(reliable_closure(scenario, setting, None))
}

/// Closure without the safety check; callers must have established safety.
/// With `stop_at`, returns as soon as that node is admitted (the set is then
/// a subset of the full closure).
pub fn reliable_closure(scenario: &Scenario, setting: &Setting, stop_at: Option<NodeId>) -> ReliableSet {
    let topology = scenario.topology();
    let source = scenario.source();
    let h_max = setting.h_max();
    let mut members = NodeSet::with_capacity(topology.node_count());
    let mut seed = vec![source];
    members.insert(source);
    for &n in topology.neighbors(source) {
        if scenario.is_correct(n) {
            members.insert(n);
            seed.push(n);
        }
    }
    let mut witnesses = BTreeMap::new();
    if stop_at.is_some_and(|s| members.contains(s)) {
        return ReliableSet {
            members,
            seed,
            witnesses,
        };
    }

    let mut scratch = Scratch::new(topology.node_count());
    let mut ball = Scratch::new(topology.node_count());
    let mut queue = VecDeque::new();
    let mut queued = NodeSet::with_capacity(topology.node_count());

    // A node can only gain a witness after a member appears within h_max
    // hops of it, so only that neighborhood is (re)queued.
    let mut enqueue_ball = |center: NodeId,
                            members: &NodeSet,
                            queue: &mut VecDeque<NodeId>,
                            queued: &mut NodeSet| {
        ball.begin();
        ball.mark(center);
        ball.queue.push_back((center, 0));
        while let Some((node, dist)) = ball.queue.pop_front() {
            if dist == h_max {
                continue;
            }
            for &next in topology.neighbors(node) {
                if scenario.is_correct(next) && ball.mark(next) {
                    if !members.contains(next) && queued.insert(next) {
                        queue.push_back(next);
                    }
                    ball.queue.push_back((next, dist + 1));
                }
            }
        }
    };
    for &s in &seed {
        enqueue_ball(s, &members, &mut queue, &mut queued);
    }

    while let Some(v) = queue.pop_front() {
        queued.remove(v);
        if members.contains(v) {
            continue;
        }
        let found = find_with(
            &mut scratch,
            topology,
            v,
            setting.bounds(),
            &|n| members.contains(n),
            &|n| scenario.is_correct(n),
        );
        if let Some(w) = found {
            members.insert(v);
            witnesses.insert(v, w);
            if stop_at == Some(v) {
                break;
            }
            enqueue_ball(v, &members, &mut queue, &mut queued);
        }
    }
    ReliableSet {
        members,
        seed,
        witnesses,
    }
}
