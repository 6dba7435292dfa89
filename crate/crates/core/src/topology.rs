//! Undirected simple graphs, the grid and torus generators, the edge-list
//! file format and bounded-length simple path enumeration.
//!
//! Nodes are dense indices. Lattice generators map the 0-based coordinate
//! `(row, col)` to `row * N + col`; nothing downstream of the generators
//! reads coordinates.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

/// Dense node index in `[0, node_count)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(index: usize) -> Self {
        NodeId(u32::try_from(index).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Growable bitset over node indices. Iteration is ascending.
#[derive(Clone, Default)]
pub struct NodeSet {
    words: Vec<u64>,
    len: usize,
}

impl NodeSet {
    pub fn with_capacity(node_count: usize) -> Self {
        NodeSet {
            words: vec![0; node_count.div_ceil(64)],
            len: 0,
        }
    }

    pub fn from_nodes<I: IntoIterator<Item = NodeId>>(node_count: usize, nodes: I) -> Self {
        let mut set = NodeSet::with_capacity(node_count);
        for node in nodes {
            set.insert(node);
        }
        set
    }

    #[inline]
    pub fn contains(&self, node: NodeId) -> bool {
        let i = node.index();
        self.words
            .get(i / 64)
            .is_some_and(|w| w & (1u64 << (i % 64)) != 0)
    }

    /// Returns `true` if the node was not already present.
    #[inline]
    pub fn insert(&mut self, node: NodeId) -> bool {
        let i = node.index();
        if i / 64 >= self.words.len() {
            self.words.resize(i / 64 + 1, 0);
        }
        let word = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        let fresh = *word & bit == 0;
        *word |= bit;
        self.len += usize::from(fresh);
        fresh
    }

    #[inline]
    pub fn remove(&mut self, node: NodeId) -> bool {
        let i = node.index();
        let Some(word) = self.words.get_mut(i / 64) else {
            return false;
        };
        let bit = 1u64 << (i % 64);
        let present = *word & bit != 0;
        *word &= !bit;
        self.len -= usize::from(present);
        present
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(NodeId::from(wi * 64 + bit))
            })
        })
    }
}

impl PartialEq for NodeSet {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl Eq for NodeSet {}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("grid size must be at least 1")]
    EmptyGrid,
    #[error("torus size {0} is degenerate; wraparound needs N >= 3")]
    DegenerateTorus(usize),
    #[error("topology needs at least one node")]
    NoNodes,
    #[error("node {node} out of range for {node_count} nodes")]
    OutOfRange { node: usize, node_count: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0} {1}")]
    DuplicateEdge(usize, usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("missing node count")]
    MissingHeader,
    #[error("malformed line {0:?}")]
    Malformed(String),
    #[error(transparent)]
    Invalid(#[from] TopologyError),
}

/// Immutable undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds a topology from an edge list, rejecting self-loops, duplicate
    /// edges (in either orientation) and out-of-range ids.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if node_count == 0 {
            return Err(TopologyError::NoNodes);
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (a, b) in edges {
            Self::add_edge(&mut adjacency, a, b)?;
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Topology { adjacency })
    }

    fn add_edge(adjacency: &mut [Vec<NodeId>], a: usize, b: usize) -> Result<(), TopologyError> {
        let node_count = adjacency.len();
        for node in [a, b] {
            if node >= node_count {
                return Err(TopologyError::OutOfRange { node, node_count });
            }
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        if adjacency[a].contains(&NodeId::from(b)) {
            return Err(TopologyError::DuplicateEdge(a.min(b), a.max(b)));
        }
        adjacency[a].push(NodeId::from(b));
        adjacency[b].push(NodeId::from(a));
        Ok(())
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn line(node_count: usize) -> Result<Self, TopologyError> {
        Self::from_edges(node_count, (1..node_count).map(|i| (i - 1, i)))
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> {
        (0..self.adjacency.len()).map(NodeId::from)
    }

    #[inline]
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.adjacency.len()
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b`, sorted ascending.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            let a = NodeId::from(a);
            list.iter().filter(move |&&b| a < b).map(move |&b| (a, b))
        })
    }

    /// Hop distances from `origin` over nodes accepted by `passable`; the
    /// origin is always expanded. Nodes farther than `limit` stay `None`.
    pub fn bfs_distances<F>(&self, origin: NodeId, limit: usize, passable: F) -> Vec<Option<usize>>
    where
        F: Fn(NodeId) -> bool,
    {
        let mut dist = vec![None; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[origin.index()] = Some(0);
        queue.push_back(origin);
        while let Some(node) = queue.pop_front() {
            let d = dist[node.index()].unwrap_or(0);
            if d == limit {
                continue;
            }
            for &next in self.neighbors(node) {
                if dist[next.index()].is_none() && passable(next) {
                    dist[next.index()] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }
}

/// Index of the 0-based lattice coordinate `(row, col)` in an `n`-wide lattice.
pub fn lattice_node(n: usize, row: usize, col: usize) -> NodeId {
    NodeId::from(row * n + col)
}

/// `N x N` grid: neighbors differ by one in exactly one coordinate.
pub fn make_grid(n: usize) -> Result<Topology, TopologyError> {
    if n == 0 {
        return Err(TopologyError::EmptyGrid);
    }
    let mut edges = Vec::with_capacity(2 * n * (n - 1));
    for row in 0..n {
        for col in 0..n {
            let here = row * n + col;
            if col + 1 < n {
                edges.push((here, here + 1));
            }
            if row + 1 < n {
                edges.push((here, here + n));
            }
        }
    }
    Topology::from_edges(n * n, edges)
}

/// `N x N` torus: the grid plus wraparound, coordinates compared modulo `N`.
pub fn make_torus(n: usize) -> Result<Topology, TopologyError> {
    if n < 3 {
        return Err(TopologyError::DegenerateTorus(n));
    }
    let mut edges = Vec::with_capacity(2 * n * n);
    for row in 0..n {
        for col in 0..n {
            let here = row * n + col;
            edges.push((here, row * n + (col + 1) % n));
            edges.push((here, ((row + 1) % n) * n + col));
        }
    }
    Topology::from_edges(n * n, edges)
}

/// Parses the edge-list format: a node count line, then one `a b` edge per
/// line. Blank lines and lines starting with `#` are skipped.
pub fn load_topology(text: &str) -> Result<Topology, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or(ParseError {
        line: text.lines().count().max(1),
        kind: ParseErrorKind::MissingHeader,
    })?;
    let node_count: usize = header.parse().map_err(|_| ParseError {
        line: header_line,
        kind: ParseErrorKind::Malformed(header.to_owned()),
    })?;
    if node_count == 0 {
        return Err(ParseError {
            line: header_line,
            kind: TopologyError::NoNodes.into(),
        });
    }

    let mut adjacency = vec![Vec::new(); node_count];
    for (line, content) in lines {
        let malformed = || ParseError {
            line,
            kind: ParseErrorKind::Malformed(content.to_owned()),
        };
        let mut fields = content.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(malformed());
        };
        let a: usize = a.parse().map_err(|_| malformed())?;
        let b: usize = b.parse().map_err(|_| malformed())?;
        Topology::add_edge(&mut adjacency, a, b).map_err(|e| ParseError {
            line,
            kind: e.into(),
        })?;
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok(Topology { adjacency })
}

/// Renders the edge-list format with edges sorted ascending by `(a, b)`.
pub fn save_topology(topology: &Topology) -> String {
    let mut out = format!("{}\n", topology.node_count());
    for (a, b) in topology.edges() {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}

/// Sequence of distinct nodes, consecutive ones adjacent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Vec<NodeId>);

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Path(nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn hops(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn origin(&self) -> Option<NodeId> {
        self.0.first().copied()
    }

    pub fn end(&self) -> Option<NodeId> {
        self.0.last().copied()
    }

    /// Distinct nodes, every consecutive pair adjacent in `topology`.
    pub fn is_valid_in(&self, topology: &Topology) -> bool {
        if self.0.is_empty() || !self.0.iter().all(|&n| topology.contains(n)) {
            return false;
        }
        let mut seen = NodeSet::with_capacity(topology.node_count());
        self.0.iter().all(|&n| seen.insert(n))
            && self.0.windows(2).all(|w| topology.are_neighbors(w[0], w[1]))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, node) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{node}")?;
        }
        Ok(())
    }
}

/// What a [`walk_paths`] visitor wants done with the path it was shown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Walk {
    /// Keep extending this path.
    Descend,
    /// Do not extend this path, continue with its siblings.
    Prune,
    /// Abort the whole walk.
    Stop,
}

/// Depth-first walk over simple paths from `origin` with 1..=`max_hops`
/// hops whose non-origin vertices satisfy `allowed` and are absent from
/// `banned`. Neighbors are visited in ascending index order and each path
/// is shown to `visit` before its extensions. Returns `true` if the visitor
/// stopped the walk.
pub fn walk_paths<A, V>(
    topology: &Topology,
    origin: NodeId,
    max_hops: usize,
    allowed: A,
    banned: &NodeSet,
    mut visit: V,
) -> bool
where
    A: Fn(NodeId) -> bool,
    V: FnMut(&[NodeId]) -> Walk,
{
    let mut path = vec![origin];
    let mut on_path = NodeSet::with_capacity(topology.node_count());
    on_path.insert(origin);
    walk_from(topology, max_hops, &allowed, banned, &mut visit, &mut path, &mut on_path)
}

fn walk_from<A, V>(
    topology: &Topology,
    max_hops: usize,
    allowed: &A,
    banned: &NodeSet,
    visit: &mut V,
    path: &mut Vec<NodeId>,
    on_path: &mut NodeSet,
) -> bool
where
    A: Fn(NodeId) -> bool,
    V: FnMut(&[NodeId]) -> Walk,
{
    let tail = *path.last().expect("path is never empty");
    for &next in topology.neighbors(tail) {
        if on_path.contains(next) || banned.contains(next) || !allowed(next) {
            continue;
        }
        path.push(next);
        let action = visit(path);
        let stopped = match action {
            Walk::Stop => true,
            Walk::Prune => false,
            Walk::Descend if path.len() <= max_hops => {
                on_path.insert(next);
                let stopped = walk_from(topology, max_hops, allowed, banned, visit, path, on_path);
                on_path.remove(next);
                stopped
            }
            Walk::Descend => false,
        };
        path.pop();
        if stopped {
            return true;
        }
    }
    false
}

/// Lazily enumerates the same paths [`walk_paths`] visits, in the same order.
pub fn enumerate_paths<'a, A>(
    topology: &'a Topology,
    origin: NodeId,
    max_hops: usize,
    allowed: A,
    banned: &'a NodeSet,
) -> PathIter<'a, A>
where
    A: Fn(NodeId) -> bool,
{
    let mut on_path = NodeSet::with_capacity(topology.node_count());
    on_path.insert(origin);
    PathIter {
        topology,
        max_hops,
        allowed,
        banned,
        path: vec![origin],
        cursors: vec![0],
        on_path,
    }
}

pub struct PathIter<'a, A> {
    topology: &'a Topology,
    max_hops: usize,
    allowed: A,
    banned: &'a NodeSet,
    path: Vec<NodeId>,
    // cursors[k]: next neighbor position to try from path[k]
    cursors: Vec<usize>,
    on_path: NodeSet,
}

impl<A: Fn(NodeId) -> bool> Iterator for PathIter<'_, A> {
    type Item = Path;

    fn next(&mut self) -> Option<Path> {
        loop {
            let depth = self.cursors.len().checked_sub(1)?;
            let tail = self.path[depth];
            let neighbors = self.topology.neighbors(tail);
            let can_extend = depth < self.max_hops;
            let mut advanced = false;
            while can_extend && self.cursors[depth] < neighbors.len() {
                let next = neighbors[self.cursors[depth]];
                self.cursors[depth] += 1;
                if self.on_path.contains(next) || self.banned.contains(next) || !(self.allowed)(next) {
                    continue;
                }
                self.path.push(next);
                self.on_path.insert(next);
                self.cursors.push(0);
                advanced = true;
                break;
            }
            if advanced {
                return Some(Path(self.path.clone()));
            }
            self.cursors.pop();
            if self.cursors.is_empty() {
                return None;
            }
            let done = self.path.pop().expect("non-root depth has a node");
            self.on_path.remove(done);
        }
    }
}
