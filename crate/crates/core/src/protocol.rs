//! Per-node broadcast state machine.
//!
//! A correct node records every `(info, visited)` tuple it accepts and
//! forwards it once. It delivers an information value either when the
//! source hands it over directly or when `n` recorded visited-sets for that
//! value are pairwise disjoint and the `i`-th one has at most `H_i` nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("a setting needs at least one bound")]
    EmptySetting,
    #[error("setting bounds must be positive")]
    ZeroBound,
    #[error("unparsable setting {0:?}")]
    BadSetting(String),
    #[error("node {receiver} received from {sender}, which is not a neighbor")]
    NotANeighbor { receiver: NodeId, sender: NodeId },
    #[error("invalid hex payload {0:?}")]
    BadHex(String),
}

/// Protocol parameters `(H_1, ..., H_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Setting {
    bounds: Vec<usize>,
}

impl Setting {
    pub fn new(bounds: Vec<usize>) -> Result<Self, ProtocolError> {
        if bounds.is_empty() {
            return Err(ProtocolError::EmptySetting);
        }
        if bounds.contains(&0) {
            return Err(ProtocolError::ZeroBound);
        }
        Ok(Setting { bounds })
    }

    /// The four reference settings `A = (1,2)`, `B = (1,2,5)`,
    /// `C = (1,3,3)` and `D = (1,2,5,5)`.
    pub fn presets() -> [(char, Setting); 4] {
        let make = |b: &[usize]| Setting { bounds: b.to_vec() };
        [
            ('A', make(&[1, 2])),
            ('B', make(&[1, 2, 5])),
            ('C', make(&[1, 3, 3])),
            ('D', make(&[1, 2, 5, 5])),
        ]
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Number of disjoint copies required for delivery (`n`).
    pub fn arity(&self) -> usize {
        self.bounds.len()
    }

    /// Largest bound (`H`); messages with `|visited| >= H` are not forwarded.
    pub fn h_max(&self) -> usize {
        *self.bounds.iter().max().expect("setting is nonempty")
    }

    /// Bounds joined with `-`, e.g. `1-3-3`.
    pub fn label(&self) -> String {
        self.bounds
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

impl FromStr for Setting {
    type Err = ProtocolError;

    /// Accepts comma- or dash-separated positive integers.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bounds = s
            .split([',', '-'])
            .map(|part| part.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ProtocolError::BadSetting(s.to_owned()))?;
        Setting::new(bounds)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Opaque payload; the genuine value and forgeries differ only by bytes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Information(Vec<u8>);

impl Information {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Information(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Result<Self, ProtocolError> {
        let bad = || ProtocolError::BadHex(hex.to_owned());
        if !hex.len().is_multiple_of(2) || !hex.is_ascii() {
            return Err(bad());
        }
        (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()
            .map(Information)
    }
}

/// Sorted set of visited node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitedSet(Vec<NodeId>);

impl VisitedSet {
    pub fn empty() -> Self {
        VisitedSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    /// Copy of this set with `node` added.
    pub fn with(&self, node: NodeId) -> Self {
        let mut nodes = self.0.clone();
        if let Err(pos) = nodes.binary_search(&node) {
            nodes.insert(pos, node);
        }
        VisitedSet(nodes)
    }

    pub fn is_disjoint(&self, other: &VisitedSet) -> bool {
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }
}

impl FromIterator<NodeId> for VisitedSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut nodes: Vec<NodeId> = iter.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        VisitedSet(nodes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message {
    pub info: Information,
    pub visited: VisitedSet,
}

/// What a node does in reaction to one received message.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub new_deliveries: Vec<Information>,
    /// Each message is multicast to every neighbor by the caller.
    pub outgoing: Vec<Message>,
}

impl StepOutput {
    pub fn is_empty(&self) -> bool {
        self.new_deliveries.is_empty() && self.outgoing.is_empty()
    }
}

/// The message the source multicasts to start a broadcast.
pub fn source_init(info: Information) -> Message {
    Message {
        info,
        visited: VisitedSet::empty(),
    }
}

/// Local state of one correct node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeState {
    id: NodeId,
    neighbors: Vec<NodeId>,
    source: NodeId,
    rec: BTreeMap<Information, BTreeSet<VisitedSet>>,
    delivered: BTreeSet<Information>,
}

impl NodeState {
    pub fn new(id: NodeId, neighbors: &[NodeId], source: NodeId) -> Self {
        let mut neighbors = neighbors.to_vec();
        neighbors.sort_unstable();
        NodeState {
            id,
            neighbors,
            source,
            rec: BTreeMap::new(),
            delivered: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn is_source(&self) -> bool {
        self.id == self.source
    }

    pub fn delivered(&self) -> &BTreeSet<Information> {
        &self.delivered
    }

    pub fn has_delivered(&self, info: &Information) -> bool {
        self.delivered.contains(info)
    }

    pub fn rec(&self) -> &BTreeMap<Information, BTreeSet<VisitedSet>> {
        &self.rec
    }

    pub fn rec_len(&self) -> usize {
        self.rec.values().map(BTreeSet::len).sum()
    }

    /// Source only: delivers `info` locally and returns the opening multicast.
    pub fn originate(&mut self, info: Information) -> Message {
        self.delivered.insert(info.clone());
        source_init(info)
    }

    /// Handles one message from a neighbor. The caller vouches for the
    /// sender's identity; a sender outside the neighborhood is a caller bug.
    pub fn on_receive(
        &mut self,
        setting: &Setting,
        sender: NodeId,
        msg: &Message,
    ) -> Result<StepOutput, ProtocolError> {
        if self.neighbors.binary_search(&sender).is_err() {
            return Err(ProtocolError::NotANeighbor {
                receiver: self.id,
                sender,
            });
        }
        let mut out = StepOutput::default();
        if self.is_source() {
            return Ok(out);
        }

        if sender == self.source {
            if self.delivered.insert(msg.info.clone()) {
                out.new_deliveries.push(msg.info.clone());
                out.outgoing.push(source_init(msg.info.clone()));
            }
            return Ok(out);
        }

        if msg.visited.contains(sender) || msg.visited.len() >= setting.h_max() {
            return Ok(out);
        }
        let extended = msg.visited.with(sender);
        let entries = self.rec.entry(msg.info.clone()).or_default();
        if !entries.insert(extended.clone()) {
            return Ok(out);
        }
        out.outgoing.push(Message {
            info: msg.info.clone(),
            visited: extended.clone(),
        });

        // Before this insertion no witness existed for an undelivered value,
        // so any witness now must use the new entry.
        if !self.delivered.contains(&msg.info)
            && find_packing(entries.iter(), setting, Some(&extended)).is_some()
        {
            self.delivered.insert(msg.info.clone());
            out.new_deliveries.push(msg.info.clone());
            out.outgoing.push(source_init(msg.info.clone()));
        }
        Ok(out)
    }
}

/// Looks for visited-sets `(S_1, ..., S_n)` among `entries` with
/// `|S_i| <= H_i` and pairwise disjoint. The search is exact. The witness is
/// returned in the setting's declared order.
pub fn check_delivery<'a, I>(entries: I, setting: &Setting) -> Option<Vec<VisitedSet>>
where
    I: IntoIterator<Item = &'a VisitedSet>,
{
    find_packing(entries, setting, None)
}

fn find_packing<'a, I>(
    entries: I,
    setting: &Setting,
    required: Option<&VisitedSet>,
) -> Option<Vec<VisitedSet>>
where
    I: IntoIterator<Item = &'a VisitedSet>,
{
    let bounds = setting.bounds();
    let h_max = setting.h_max();
    let mut has_empty = false;
    let mut candidates: Vec<&VisitedSet> = Vec::new();
    for entry in entries {
        if entry.is_empty() {
            has_empty = true;
        } else if entry.len() <= h_max && Some(entry) != required {
            candidates.push(entry);
        }
    }
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    // Slots in ascending bound order, ties by declared index.
    let mut slots: Vec<usize> = (0..bounds.len()).collect();
    slots.sort_by_key(|&i| (bounds[i], i));

    let mut witness: Vec<Option<VisitedSet>> = vec![None; bounds.len()];
    let mut used: Vec<NodeId> = Vec::new();

    match required {
        None if has_empty => return Some(vec![VisitedSet::empty(); bounds.len()]),
        None => {}
        Some(req) if req.is_empty() => {
            return Some(vec![VisitedSet::empty(); bounds.len()]);
        }
        Some(req) => {
            // Try the required entry in the first slot of each distinct
            // bound that can hold it.
            let mut last_bound = None;
            for pos in 0..slots.len() {
                let slot = slots[pos];
                if bounds[slot] < req.len() || last_bound == Some(bounds[slot]) {
                    continue;
                }
                last_bound = Some(bounds[slot]);
                if has_empty {
                    let mut w = vec![VisitedSet::empty(); bounds.len()];
                    w[slot] = req.clone();
                    return Some(w);
                }
                let rest: Vec<usize> = slots
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| p != pos)
                    .map(|(_, &s)| s)
                    .collect();
                witness[slot] = Some(req.clone());
                used.clear();
                used.extend_from_slice(req.nodes());
                let mut search = Packing::new(&candidates, bounds, &rest);
                if search.fill(0, &mut used, &mut witness, 0) {
                    return Some(witness.into_iter().map(Option::unwrap).collect());
                }
                witness[slot] = None;
            }
            return None;
        }
    }

    let mut search = Packing::new(&candidates, bounds, &slots);
    if search.fill(0, &mut used, &mut witness, 0) {
        Some(witness.into_iter().map(Option::unwrap).collect())
    } else {
        None
    }
}

struct Packing<'c, 'a> {
    candidates: &'c [&'a VisitedSet],
    bounds: &'c [usize],
    slots: &'c [usize],
    // every candidate intersects this set, so k pairwise disjoint
    // candidates need k distinct unused members of it
    hitting: Vec<NodeId>,
}

impl<'c, 'a> Packing<'c, 'a> {
    fn new(candidates: &'c [&'a VisitedSet], bounds: &'c [usize], slots: &'c [usize]) -> Self {
        Packing {
            candidates,
            bounds,
            slots,
            hitting: greedy_hitting_set(candidates),
        }
    }

    fn fill(
        &mut self,
        pos: usize,
        used: &mut Vec<NodeId>,
        witness: &mut [Option<VisitedSet>],
        start: usize,
    ) -> bool {
        if pos == self.slots.len() {
            return true;
        }
        let remaining = self.slots.len() - pos;
        let free = self.hitting.iter().filter(|h| !used.contains(h)).count();
        if free < remaining {
            return false;
        }
        let slot = self.slots[pos];
        let bound = self.bounds[slot];
        for c in start..self.candidates.len() {
            let cand = self.candidates[c];
            if cand.len() > bound {
                // candidates are sorted by size
                break;
            }
            if cand.nodes().iter().any(|n| used.contains(n)) {
                continue;
            }
            let mark = used.len();
            used.extend_from_slice(cand.nodes());
            witness[slot] = Some(cand.clone());
            // Equal consecutive bounds are interchangeable: take them in
            // increasing candidate order.
            let next_start = match self.slots.get(pos + 1) {
                Some(&next) if self.bounds[next] == bound => c + 1,
                _ => 0,
            };
            if self.fill(pos + 1, used, witness, next_start) {
                return true;
            }
            used.truncate(mark);
            witness[slot] = None;
        }
        false
    }
}

fn greedy_hitting_set(sets: &[&VisitedSet]) -> Vec<NodeId> {
    let mut unhit: Vec<&VisitedSet> = sets.to_vec();
    let mut picked = Vec::new();
    while !unhit.is_empty() {
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for set in &unhit {
            for &n in set.nodes() {
                *counts.entry(n).or_default() += 1;
            }
        }
        let (&best, _) = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .expect("unhit sets are nonempty");
        picked.push(best);
        unhit.retain(|s| !s.contains(best));
    }
    picked
}
