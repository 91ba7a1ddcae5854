//! Graph topology, Erdős–Rényi generation and neighborhood queries.

mod laplacian;

use std::collections::{BTreeSet, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

pub use laplacian::{
    eigendecompose, eigendecompose_with_cap, weighted_laplacian, SpectralDecomposition,
    WeightedLaplacian, DEFAULT_EIGEN_CAP,
};

/// Set of node ids, ordered for deterministic iteration.
pub type NodeSet = BTreeSet<usize>;

/// Immutable simple graph with dense node ids `0..num_nodes`.
///
/// Edges are stored in canonical order: lexicographically sorted, and for undirected
/// graphs every pair is stored as `(low, high)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    directed: bool,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    directed: bool,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::new(
            r.num_nodes,
            r.edges.into_iter().map(|[i, j]| (i, j)).collect(),
            r.directed,
        )
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            num_nodes: g.num_nodes,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            directed: g.directed,
        }
    }
}

impl Graph {
    /// Builds a graph, canonicalizing the edge list.
    ///
    /// Rejects self-loops, out-of-range endpoints and duplicate edges (for undirected
    /// graphs `(i, j)` and `(j, i)` are the same edge).
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>, directed: bool) -> Result<Self> {
        let mut canon = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= num_nodes || j >= num_nodes {
                return param_err(format!("edge ({i}, {j}) out of range for {num_nodes} nodes"));
            }
            if i == j {
                return param_err(format!("self-loop at node {i}"));
            }
            canon.push(if directed { (i, j) } else { (i.min(j), i.max(j)) });
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return param_err(format!("duplicate edge ({}, {})", w[0].0, w[0].1));
        }
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(i, j) in &canon {
            neighbors[i].push(j);
            if !directed {
                neighbors[j].push(i);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges: canon,
            directed,
            neighbors,
        })
    }

    pub fn undirected(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(num_nodes, edges, false)
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        Self::undirected(n, (1..n).map(|i| (i - 1, i)).collect()).expect("path graph is simple")
    }

    /// Complete undirected graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::undirected(n, edges).expect("complete graph is simple")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Neighbors of `i`: all adjacent nodes when undirected, successors when directed.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Position of an edge in the canonical edge list.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if self.directed {
            (i, j)
        } else {
            (i.min(j), i.max(j))
        };
        self.edges.binary_search(&key).ok()
    }

    /// True when every node is reachable from node 0, ignoring edge direction.
    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let sources: NodeSet = [0].into_iter().collect();
        self.bfs_within(&sources, usize::MAX).len() == self.num_nodes
    }

    /// Applies a node relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return param_err("permutation length differs from node count");
        }
        Self::new(
            self.num_nodes,
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect(),
            self.directed,
        )
    }

    fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        if !self.directed {
            return self.neighbors.clone();
        }
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    fn bfs_within(&self, sources: &NodeSet, k: usize) -> NodeSet {
        let adj = self.undirected_adjacency();
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut queue = VecDeque::new();
        for &s in sources {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..self.num_nodes).filter(|&i| dist[i] != usize::MAX).collect()
    }
}

/// All nodes within `k` hops of any source, sources included.
///
/// Directed edges are traversed in both directions, so the result covers every node that
/// can exchange information with a source through `k` message-passing rounds.
pub fn k_hop_neighborhood(g: &Graph, sources: &NodeSet, k: usize) -> Result<NodeSet> {
    if let Some(&bad) = sources.iter().find(|&&s| s >= g.num_nodes) {
        return param_err(format!("source node {bad} out of range"));
    }
    Ok(g.bfs_within(sources, k))
}

pub const MAX_REJECTION_DRAWS: usize = 1000;

/// How connected G(n, m) graphs are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErSampler {
    /// Plain G(n, m) draws, rejecting disconnected ones. Fails after `max_draws`.
    Rejection { max_draws: usize },
    /// Rejection first; if every draw is disconnected, a uniform random spanning tree
    /// completed with uniformly chosen extra edges.
    RejectionThenTree { max_draws: usize },
}

impl Default for ErSampler {
    fn default() -> Self {
        ErSampler::RejectionThenTree {
            max_draws: MAX_REJECTION_DRAWS,
        }
    }
}

/// Connected simple undirected graph with exactly `n_edges` edges, deterministic in `seed`.
pub fn generate_er(n_nodes: usize, n_edges: usize, seed: u64) -> Result<Graph> {
    generate_er_with(n_nodes, n_edges, seed, ErSampler::default())
}

pub fn generate_er_with(
    n_nodes: usize,
    n_edges: usize,
    seed: u64,
    sampler: ErSampler,
) -> Result<Graph> {
    let max_pairs = n_nodes * n_nodes.saturating_sub(1) / 2;
    if n_nodes == 0 || n_edges + 1 < n_nodes || n_edges > max_pairs {
        return param_err(format!(
            "infeasible edge count {n_edges} for {n_nodes} nodes (need {}..={max_pairs})",
            n_nodes.saturating_sub(1)
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_draws = match sampler {
        ErSampler::Rejection { max_draws } | ErSampler::RejectionThenTree { max_draws } => {
            max_draws
        }
    };
    for _ in 0..max_draws {
        let g = draw_gnm(n_nodes, n_edges, &mut rng);
        if g.is_connected() {
            return Ok(g);
        }
    }
    match sampler {
        ErSampler::Rejection { .. } => Err(Error::GenerationFailure {
            attempts: max_draws,
        }),
        ErSampler::RejectionThenTree { .. } => Ok(draw_tree_seeded(n_nodes, n_edges, &mut rng)),
    }
}

fn draw_gnm(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Graph {
    let total = n * (n - 1) / 2;
    let mut picks = index::sample(rng, total, m).into_vec();
    picks.sort_unstable();
    // Sweep sorted pair indices against the row-major upper triangle.
    let mut edges = Vec::with_capacity(m);
    let (mut row, mut row_start) = (0usize, 0usize);
    for k in picks {
        while k >= row_start + (n - 1 - row) {
            row_start += n - 1 - row;
            row += 1;
        }
        edges.push((row, row + 1 + (k - row_start)));
    }
    Graph::undirected(n, edges).expect("distinct pairs form a simple graph")
}

fn draw_tree_seeded(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: BTreeSet<(usize, usize)> = prufer_tree(n, rng).into_iter().collect();
    while edges.len() < m {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Graph::undirected(n, edges.into_iter().collect()).expect("tree plus distinct pairs is simple")
}

/// Uniform random labeled tree via a random Prüfer sequence.
fn prufer_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = *leaves.iter().next().expect("a leaf always exists");
        leaves.remove(&leaf);
        edges.push((leaf.min(s), leaf.max(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let rest: Vec<usize> = leaves.into_iter().collect();
    edges.push((rest[0], rest[1]));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bfs_oracle(g: &Graph, src: usize) -> Vec<usize> {
        // Independent adjacency-matrix BFS, returns hop distances (usize::MAX unreachable).
        let n = g.num_nodes();
        let mut adj = vec![vec![false; n]; n];
        for &(i, j) in g.edges() {
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let mut dist = vec![usize::MAX; n];
        dist[src] = 0;
        let mut frontier = vec![src];
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                for v in 0..n {
                    if adj[u][v] && dist[v] == usize::MAX {
                        dist[v] = d;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        dist
    }

    #[test]
    fn er_full_scale_graph() {
        let g = generate_er(100, 400, 1).unwrap();
        assert_eq!(g.num_nodes(), 100);
        assert_eq!(g.num_edges(), 400);
        assert!(bfs_oracle(&g, 0).iter().all(|&d| d != usize::MAX));
    }

    #[test]
    fn er_single_edge() {
        let g = generate_er(2, 1, 0).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn er_spanning_tree_connected() {
        let g = generate_er(30, 29, 7).unwrap();
        assert_eq!(g.num_edges(), 29);
        assert!(bfs_oracle(&g, 0).iter().all(|&d| d != usize::MAX));
    }

    #[test]
    fn er_rejects_infeasible_counts() {
        assert!(matches!(generate_er(10, 8, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_er(4, 7, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn er_strict_rejection_reports_failure() {
        let r = generate_er_with(60, 59, 3, ErSampler::Rejection { max_draws: 1000 });
        assert!(matches!(r, Err(Error::GenerationFailure { attempts: 1000 })));
    }

    #[test]
    fn er_deterministic() {
        assert_eq!(generate_er(50, 120, 9).unwrap(), generate_er(50, 120, 9).unwrap());
        assert_ne!(generate_er(50, 120, 9).unwrap(), generate_er(50, 120, 10).unwrap());
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(Graph::undirected(3, vec![(1, 1)]).is_err());
        assert!(Graph::undirected(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, vec![(0, 1), (1, 0)], true).is_ok());
        assert!(Graph::undirected(3, vec![(0, 3)]).is_err());
    }

    #[test]
    fn k_hop_path() {
        let g = Graph::path(4);
        let s: NodeSet = [0].into();
        assert_eq!(k_hop_neighborhood(&g, &s, 2).unwrap(), [0, 1, 2].into());
        assert!(k_hop_neighborhood(&g, &NodeSet::new(), 5).unwrap().is_empty());
        assert!(k_hop_neighborhood(&g, &[7].into(), 1).is_err());
    }

    #[test]
    fn k_hop_matches_per_source_bfs() {
        let g = generate_er(50, 80, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let sources: NodeSet = (0..4).map(|_| rng.random_range(0..50)).collect();
            let got = k_hop_neighborhood(&g, &sources, 2).unwrap();
            let mut want = NodeSet::new();
            for &s in &sources {
                for (v, d) in bfs_oracle(&g, s).into_iter().enumerate() {
                    if d <= 2 {
                        want.insert(v);
                    }
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let g = Graph::undirected(4, vec![(3, 2), (0, 1), (2, 0)]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"num_nodes":4,"edges":[[0,1],[0,2],[2,3]],"directed":false}"#);
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"num_nodes":2,"edges":[[0,0]],"directed":false}"#).is_err());
    }

    proptest! {
        #[test]
        fn neighbor_index_is_consistent(n in 2usize..40, extra in 0usize..40, seed in 0u64..500) {
            let m = (n - 1 + extra).min(n * (n - 1) / 2);
            let g = generate_er(n, m, seed).unwrap();
            prop_assert!(g.is_connected());
            prop_assert_eq!(g.num_edges(), m);
            let mut rebuilt = Vec::new();
            for i in 0..n {
                for &j in g.neighbors(i) {
                    prop_assert!(g.neighbors(j).contains(&i));
                    if i < j { rebuilt.push((i, j)); }
                }
            }
            rebuilt.sort_unstable();
            prop_assert_eq!(rebuilt.as_slice(), g.edges());
        }

        #[test]
        fn k_hop_is_monotone(seed in 0u64..200, k in 0usize..4) {
            let g = generate_er(25, 35, seed).unwrap();
            let src: NodeSet = [(seed as usize) % 25].into();
            let a = k_hop_neighborhood(&g, &src, k).unwrap();
            let b = k_hop_neighborhood(&g, &src, k + 1).unwrap();
            prop_assert!(a.is_subset(&b));
        }
    }
}
