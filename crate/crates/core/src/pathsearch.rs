//! Epoch construction for adaptive asynchronous gossip.
//!
//! Each virtual iteration commits one edge into the accepted set `P` (and its
//! endpoints into the seen set `V`). An epoch ends once `(V, P)` spans every
//! worker and is connected, at which point both sets are cleared.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::topology::{Edge, Topology, WorkerId};

#[derive(Debug, Error, PartialEq)]
pub enum PathSearchError {
    #[error("edge {0} is not acceptable in the current state")]
    Unacceptable(Edge),
    #[error("epoch {0} is not complete; cannot reset")]
    EpochIncomplete(usize),
    #[error("unknown pathsearch rule {0:?} (expected `component` or `literal`)")]
    UnknownRule(String),
}

/// Which edges may extend the accepted set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum AcceptRule {
    /// Endpoints must lie in different components of `(V, P)`.
    #[default]
    Component,
    /// At least one endpoint must be outside `V`. Can stall once `V` covers
    /// every worker while `(V, P)` is still disconnected.
    Literal,
}

impl FromStr for AcceptRule {
    type Err = PathSearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "component" => Ok(AcceptRule::Component),
            "literal" => Ok(AcceptRule::Literal),
            other => Err(PathSearchError::UnknownRule(other.to_string())),
        }
    }
}

impl std::fmt::Display for AcceptRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AcceptRule::Component => "component",
            AcceptRule::Literal => "literal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
    components: usize,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.components -= 1;
        true
    }
}

/// Consensus edge and vertex sets for the current epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSearchState {
    n_workers: usize,
    rule: AcceptRule,
    accepted_edges: BTreeSet<Edge>,
    seen_vertices: BTreeSet<WorkerId>,
    epoch_index: usize,
    iterations_this_epoch: usize,
    epoch_lengths: Vec<usize>,
    // vertices outside V are singletons, so union-find over all ids matches
    // the component structure of (V, P)
    components: DisjointSets,
}

impl PathSearchState {
    pub fn new(n_workers: usize, rule: AcceptRule) -> Self {
        PathSearchState {
            n_workers,
            rule,
            accepted_edges: BTreeSet::new(),
            seen_vertices: BTreeSet::new(),
            epoch_index: 0,
            iterations_this_epoch: 0,
            epoch_lengths: Vec::new(),
            components: DisjointSets::new(n_workers),
        }
    }

    pub fn rule(&self) -> AcceptRule {
        self.rule
    }

    pub fn accepted_edges(&self) -> &BTreeSet<Edge> {
        &self.accepted_edges
    }

    pub fn seen_vertices(&self) -> &BTreeSet<WorkerId> {
        &self.seen_vertices
    }

    pub fn epoch_index(&self) -> usize {
        self.epoch_index
    }

    pub fn iterations_this_epoch(&self) -> usize {
        self.iterations_this_epoch
    }

    /// Lengths (in committed edges) of every completed epoch so far.
    pub fn epoch_lengths(&self) -> &[usize] {
        &self.epoch_lengths
    }

    /// Largest completed epoch length, i.e. the realized connectivity bound.
    pub fn realized_b(&self) -> Option<usize> {
        self.epoch_lengths.iter().copied().max()
    }

    pub fn same_component(&self, a: WorkerId, b: WorkerId) -> bool {
        self.components.find(a) == self.components.find(b)
    }

    pub fn acceptable_edge(&self, edge: Edge, topology: &Topology) -> bool {
        if !topology.has_edge(edge.lo(), edge.hi()) || self.accepted_edges.contains(&edge) {
            return false;
        }
        match self.rule {
            AcceptRule::Component => !self.same_component(edge.lo(), edge.hi()),
            AcceptRule::Literal => {
                !self.seen_vertices.contains(&edge.lo()) || !self.seen_vertices.contains(&edge.hi())
            }
        }
    }

    pub fn commit_edge(&mut self, edge: Edge, topology: &Topology) -> Result<(), PathSearchError> {
        if !self.acceptable_edge(edge, topology) {
            return Err(PathSearchError::Unacceptable(edge));
        }
        self.accepted_edges.insert(edge);
        self.seen_vertices.insert(edge.lo());
        self.seen_vertices.insert(edge.hi());
        self.components.union(edge.lo(), edge.hi());
        self.iterations_this_epoch += 1;
        Ok(())
    }

    pub fn epoch_complete(&self) -> bool {
        self.seen_vertices.len() == self.n_workers && self.components.components == 1
    }

    pub fn reset_epoch(&mut self) -> Result<usize, PathSearchError> {
        if !self.epoch_complete() {
            return Err(PathSearchError::EpochIncomplete(self.epoch_index));
        }
        let length = self.iterations_this_epoch;
        self.epoch_lengths.push(length);
        self.accepted_edges.clear();
        self.seen_vertices.clear();
        self.components = DisjointSets::new(self.n_workers);
        self.iterations_this_epoch = 0;
        self.epoch_index += 1;
        Ok(length)
    }

    /// Looks for an acceptable edge between `finisher` and another waiting
    /// worker. Returns the smallest such edge and the connected component of
    /// the waiting subgraph that contains the finisher, or `None` if the
    /// finisher has to keep waiting.
    pub fn group_for_finisher(
        &self,
        finisher: WorkerId,
        waiting: &BTreeSet<WorkerId>,
        topology: &Topology,
    ) -> Option<(Vec<WorkerId>, Edge)> {
        let nbrs = topology.neighbors(finisher).ok()?;
        let edge = nbrs
            .iter()
            .filter(|w| waiting.contains(w))
            .map(|&w| Edge::new(finisher, w))
            .filter(|&e| self.acceptable_edge(e, topology))
            .min()?;
        Some((waiting_component(finisher, waiting, topology), edge))
    }
}

/// Connected component of the topology restricted to `waiting` that contains
/// `start`, in ascending id order.
pub fn waiting_component(start: WorkerId, waiting: &BTreeSet<WorkerId>, topology: &Topology) -> Vec<WorkerId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &u in topology.neighbors(v).unwrap_or(&[]) {
            if waiting.contains(&u) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    seen.into_iter().collect()
}

/// One committed edge in the epoch trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTraceEntry {
    pub epoch: usize,
    pub k: usize,
    pub edge: Edge,
    pub sim_time: f64,
    pub group: Vec<WorkerId>,
}

pub fn epoch_trace_csv(trace: &[EpochTraceEntry]) -> String {
    let mut out = String::from("epoch,k,edge_lo,edge_hi,sim_time_s,group\n");
    for e in trace {
        let group: Vec<String> = e.group.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{:?},{}",
            e.epoch,
            e.k,
            e.edge.lo(),
            e.edge.hi(),
            e.sim_time,
            group.join(";")
        );
    }
    out
}
