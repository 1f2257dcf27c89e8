//! Per-tick radio proximity graph and the transmitter-side message ledger.

use std::collections::VecDeque;

use thiserror::Error;

use crate::geometry::Point;

/// Index of a node in a [`RadioGraph`]. The engine uses 0 for the root.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadioError {
    #[error("unknown node id {id} (graph has {len} nodes)")]
    UnknownNode { id: NodeId, len: usize },
}

/// Undirected unit-disc graph: `u ~ v` iff `u != v` and `dist(u, v) <= range`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioGraph {
    positions: Vec<Point>,
    range: f64,
    adjacency: Vec<Vec<NodeId>>,
}

impl RadioGraph {
    /// Builds the graph from scratch. Neighbor lists are sorted by id.
    pub fn build(positions: &[Point], range: f64) -> Self {
        let n = positions.len();
        let r2 = range * range;
        let mut adjacency = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                let dx = positions[u].x - positions[v].x;
                let dy = positions[u].y - positions[v].y;
                if dx * dx + dy * dy <= r2 {
                    adjacency[u].push(v);
                    adjacency[v].push(u);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            positions: positions.to_vec(),
            range,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn position(&self, id: NodeId) -> Point {
        self.positions[id]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency.get(u).is_some_and(|list| list.binary_search(&v).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn check(&self, id: NodeId) -> Result<(), RadioError> {
        if id < self.len() {
            Ok(())
        } else {
            Err(RadioError::UnknownNode { id, len: self.len() })
        }
    }

    /// Connected components by union-find.
    pub fn connected_components(&self) -> Components {
        let mut dsu = Dsu::new(self.len());
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list.iter().filter(|&&v| v > u) {
                dsu.union(u, v);
            }
        }
        // Canonical labels: components numbered by their smallest member.
        let mut label_of_root = vec![usize::MAX; self.len()];
        let mut labels = vec![0; self.len()];
        let mut count = 0;
        for (u, label) in labels.iter_mut().enumerate() {
            let root = dsu.find(u);
            if label_of_root[root] == usize::MAX {
                label_of_root[root] = count;
                count += 1;
            }
            *label = label_of_root[root];
        }
        Components { count, labels }
    }

    pub fn has_path(&self, u: NodeId, v: NodeId) -> Result<bool, RadioError> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Ok(true);
        }
        Ok(self.hop_counts_from(u)?[v].is_some())
    }

    /// BFS hop distance from `root`; `None` marks unreachable nodes.
    pub fn hop_counts_from(&self, root: NodeId) -> Result<Vec<Option<u32>>, RadioError> {
        self.check(root)?;
        let mut hops = vec![None; self.len()];
        hops[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let next = hops[u].map(|h| h + 1);
            for &v in &self.adjacency[u] {
                if hops[v].is_none() {
                    hops[v] = next;
                    queue.push_back(v);
                }
            }
        }
        Ok(hops)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub count: usize,
    /// Component label per node; labels are assigned in order of each
    /// component's smallest node id.
    pub labels: Vec<usize>,
}

struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Kind of a broadcast payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    /// Position, heading and speed.
    Beacon,
    /// Full pheromone map.
    Map,
    /// Clustering weight (carries kinematics too).
    Weight,
}

/// Size of a map payload in message units (a 100 x 100 grid).
pub const MAP_PAYLOAD_UNITS: u64 = 100 * 100;

impl PayloadKind {
    pub const fn size_units(self) -> u64 {
        match self {
            PayloadKind::Beacon | PayloadKind::Weight => 1,
            PayloadKind::Map => MAP_PAYLOAD_UNITS,
        }
    }
}

/// Transmitter-side accounting: one broadcast is one message no matter how
/// many neighbors hear it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageLedger {
    pub message_count: u64,
    pub total_size: u64,
}

impl MessageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_broadcast(&mut self, size_units: u64) {
        debug_assert!(size_units > 0, "empty broadcast");
        self.message_count += 1;
        self.total_size += size_units;
    }
}
