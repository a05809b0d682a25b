//! Static communication graph shared by all algorithms.
//!
//! Workers are identified by dense ids `0..n`. Edges are unordered pairs
//! stored in normalized `(min, max)` form, so symmetry holds by construction.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Worker identifier.
pub type WorkerId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("a topology needs at least 2 workers, got {0}")]
    TooFewWorkers(usize),
    #[error("edge probability {0} is outside [0, 1]")]
    InvalidEdgeProb(f64),
    #[error("unknown worker id {id} (graph has {n} workers)")]
    UnknownWorker { id: WorkerId, n: usize },
    #[error("self-loop on worker {0}")]
    SelfLoop(WorkerId),
    #[error("graph is not connected")]
    Disconnected,
    #[error("malformed edge list: {0}")]
    Parse(String),
}

/// Unordered pair of distinct workers, stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(WorkerId, WorkerId);

impl Edge {
    /// Builds a normalized edge. Panics on a self-loop.
    pub fn new(a: WorkerId, b: WorkerId) -> Self {
        assert_ne!(a, b, "self-loop edge ({a}, {a})");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn lo(self) -> WorkerId {
        self.0
    }

    pub fn hi(self) -> WorkerId {
        self.1
    }

    pub fn touches(self, w: WorkerId) -> bool {
        self.0 == w || self.1 == w
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// Undirected, connected communication graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_workers: usize,
    edges: BTreeSet<Edge>,
    adjacency: Vec<Vec<WorkerId>>,
}

impl Topology {
    /// Builds a topology from an edge list, validating ids and connectivity.
    pub fn from_edges<I>(n_workers: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (WorkerId, WorkerId)>,
    {
        let g = Self::from_edges_unchecked(n_workers, edges)?;
        if n_workers < 2 {
            return Err(TopologyError::TooFewWorkers(n_workers));
        }
        if !is_connected(&g) {
            return Err(TopologyError::Disconnected);
        }
        Ok(g)
    }

    /// Like [`Topology::from_edges`] but without the connectivity check.
    /// Used for inspecting arbitrary graphs with [`is_connected`].
    pub fn from_edges_unchecked<I>(n_workers: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (WorkerId, WorkerId)>,
    {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for id in [a, b] {
                if id >= n_workers {
                    return Err(TopologyError::UnknownWorker { id, n: n_workers });
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            set.insert(Edge::new(a, b));
        }
        let mut adjacency = vec![Vec::new(); n_workers];
        for e in &set {
            adjacency[e.lo()].push(e.hi());
            adjacency[e.hi()].push(e.lo());
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Topology {
            n_workers,
            edges: set,
            adjacency,
        })
    }

    pub fn complete(n_workers: usize) -> Result<Self, TopologyError> {
        let edges = (0..n_workers).flat_map(|i| ((i + 1)..n_workers).map(move |j| (i, j)));
        Self::from_edges(n_workers, edges)
    }

    pub fn path(n_workers: usize) -> Result<Self, TopologyError> {
        Self::from_edges(n_workers, (1..n_workers).map(|i| (i - 1, i)))
    }

    pub fn ring(n_workers: usize) -> Result<Self, TopologyError> {
        if n_workers < 3 {
            return Self::path(n_workers);
        }
        Self::from_edges(n_workers, (0..n_workers).map(|i| (i, (i + 1) % n_workers)))
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: WorkerId, b: WorkerId) -> bool {
        a != b && self.edges.contains(&Edge::new(a, b))
    }

    pub fn degree(&self, j: WorkerId) -> usize {
        self.adjacency[j].len()
    }

    /// Neighbors of `j`, excluding `j` itself, in ascending order.
    pub fn neighbors(&self, j: WorkerId) -> Result<&[WorkerId], TopologyError> {
        self.adjacency
            .get(j)
            .map(Vec::as_slice)
            .ok_or(TopologyError::UnknownWorker {
                id: j,
                n: self.n_workers,
            })
    }

    /// Writes the plain-text edge-list form: `N M` then one `i j` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n_workers, self.edges.len());
        for e in &self.edges {
            out.push_str(&format!("{} {}\n", e.lo(), e.hi()));
        }
        out
    }
}

impl FromStr for Topology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| TopologyError::Parse("missing header line".into()))?;
        let (n, m) = parse_pair(header)?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            edges.push(parse_pair(line)?);
        }
        if edges.len() != m {
            return Err(TopologyError::Parse(format!(
                "header declares {m} edges, found {}",
                edges.len()
            )));
        }
        Topology::from_edges(n, edges)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize), TopologyError> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(TopologyError::Parse(format!("expected two integers, got {line:?}"))),
    }
}

/// Breadth-first reachability from worker 0.
pub fn is_connected(g: &Topology) -> bool {
    let n = g.n_workers;
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &g.adjacency[v] {
            if !seen[u] {
                seen[u] = true;
                reached += 1;
                queue.push_back(u);
            }
        }
    }
    reached == n
}

/// Seeded random connected graph: a uniform random spanning tree (decoded
/// from a random Prüfer sequence) plus every other pair independently with
/// probability `edge_prob`.
pub fn random_connected_graph(n: usize, edge_prob: f64, seed: u64) -> Result<Topology, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooFewWorkers(n));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(TopologyError::InvalidEdgeProb(edge_prob));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prufer: Vec<usize> = (0..n.saturating_sub(2)).map(|_| rng.random_range(0..n)).collect();
    let mut edges: BTreeSet<Edge> = prufer_to_tree(n, &prufer).into_iter().collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let e = Edge::new(i, j);
            // one draw per candidate pair keeps the stream layout independent of the tree
            let draw: f64 = rng.random();
            if !edges.contains(&e) && draw < edge_prob {
                edges.insert(e);
            }
        }
    }
    Topology::from_edges(n, edges.into_iter().map(|e| (e.lo(), e.hi())))
}

fn prufer_to_tree(n: usize, seq: &[usize]) -> Vec<Edge> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let Reverse(leaf) = leaves.pop().expect("Prüfer decoding always has a leaf");
        edges.push(Edge::new(leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().expect("two leaves remain");
    let Reverse(b) = leaves.pop().expect("two leaves remain");
    edges.push(Edge::new(a, b));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_workers_force_single_edge() {
        let g = random_connected_graph(2, 0.0, 7).unwrap();
        assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![Edge::new(0, 1)]);
    }

    #[test]
    fn full_probability_gives_complete_graph() {
        let g = random_connected_graph(4, 1.0, 1).unwrap();
        assert_eq!(g.n_edges(), 6);
        assert_eq!(g, Topology::complete(4).unwrap());
    }

    #[test]
    fn rejects_single_worker() {
        assert_eq!(
            random_connected_graph(1, 0.5, 0).unwrap_err(),
            TopologyError::TooFewWorkers(1)
        );
    }

    #[test]
    fn connectivity_queries() {
        assert!(is_connected(&Topology::complete(4).unwrap()));
        assert!(is_connected(&Topology::path(4).unwrap()));
        let split = Topology::from_edges_unchecked(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!is_connected(&split));
        assert_eq!(
            Topology::from_edges(4, [(0, 1), (2, 3)]).unwrap_err(),
            TopologyError::Disconnected
        );
    }

    #[test]
    fn neighbor_sets() {
        let path = Topology::path(3).unwrap();
        assert_eq!(path.neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(path.neighbors(0).unwrap(), &[1]);
        assert_eq!(Topology::complete(4).unwrap().neighbors(3).unwrap(), &[0, 1, 2]);
        assert!(matches!(
            path.neighbors(3),
            Err(TopologyError::UnknownWorker { id: 3, n: 3 })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = random_connected_graph(9, 0.3, 5).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text.parse::<Topology>().unwrap(), g);
        assert!("3 1\n0 1\n".parse::<Topology>().is_err());
        assert!("2 2\n0 1\n".parse::<Topology>().is_err());
    }
}
