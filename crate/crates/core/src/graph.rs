//! Observed graphs: ingestion, dense matrix views and the connectivity-preserving
//! edge split used by the link-prediction protocol.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::textfmt::data_lines;

pub mod generators;

/// Largest node count accepted from text inputs.
pub const MAX_NODES: usize = 1 << 22;

/// Largest node count accepted by inputs that imply dense `N×N` storage.
pub const MAX_DENSE_NODES: usize = 1 << 13;

/// Plain graph with sorted, duplicate-free adjacency lists.
///
/// For directed graphs `adjacency[u]` holds out-neighbours; undirected graphs
/// store every edge in both lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    adjacency: Vec<Vec<usize>>,
    num_edges: usize,
}

/// Counts of input lines dropped while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a graph, dropping self-loops and duplicate edges.
    pub fn from_edges(
        num_nodes: usize,
        directed: bool,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Graph, LoadReport)> {
        let mut report = LoadReport::default();
        let mut adjacency = vec![Vec::new(); num_nodes];
        let mut seen = HashSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
            if !seen.insert(key) {
                report.duplicates += 1;
                continue;
            }
            adjacency[u].push(v);
            if !directed {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = Graph {
            num_nodes,
            directed,
            adjacency,
            num_edges: seen.len(),
        };
        Ok((graph, report))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Out-neighbours of `u` (all neighbours when undirected).
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edge in either direction.
    pub fn connected_pair(&self, u: usize, v: usize) -> bool {
        self.has_edge(u, v) || self.has_edge(v, u)
    }

    /// Edges in canonical form: `(u, v)` as stored for directed graphs,
    /// `u < v` for undirected ones. Sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if self.directed || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Connected (weakly, for directed graphs). The empty graph is not.
    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return false;
        }
        let mut uf = UnionFind::new(self.num_nodes);
        let mut components = self.num_nodes;
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if uf.union(u, v) {
                    components -= 1;
                }
            }
        }
        components == 1
    }

    /// Nodes reachable from `root` along out-edges, including `root`.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    pub fn adjacency_matrix(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                a[(u, v)] = 1.0;
            }
        }
        a
    }

    /// `L = D - A`; undirected graphs only.
    pub fn laplacian(&self) -> Result<Matrix> {
        if self.directed {
            return Err(Error::invalid("laplacian is defined for undirected graphs only"));
        }
        let mut l = self.adjacency_matrix();
        l.scale(-1.0);
        for u in 0..self.num_nodes {
            l[(u, u)] = self.degree(u) as f64;
        }
        Ok(l)
    }

    /// Serializes as an edge list, one canonical edge per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// Parses an edge list: one `u v` pair per line, `#` comments ignored.
/// `N` is one more than the largest id seen.
pub fn load_edge_list(text: &str, directed: bool) -> Result<(Graph, LoadReport)> {
    const WHAT: &str = "edge list";
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    for (line_no, line) in data_lines(text) {
        let mut it = line.split_ascii_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(WHAT, line_no, "expected two node ids"));
        };
        let parse = |tok: &str| {
            tok.parse::<u32>()
                .map(|v| v as usize)
                .map_err(|_| Error::parse(WHAT, line_no, format!("bad node id {tok:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= MAX_NODES || v >= MAX_NODES {
            return Err(Error::parse(WHAT, line_no, format!("node id exceeds {MAX_NODES}")));
        }
        max_id = Some(max_id.unwrap_or(0).max(u).max(v));
        edges.push((u, v));
    }
    let Some(max_id) = max_id else {
        return Err(Error::parse(WHAT, 0, "no edges"));
    };
    let (graph, report) = Graph::from_edges(max_id + 1, directed, edges)?;
    if report.self_loops > 0 || report.duplicates > 0 {
        log::warn!(
            "edge list: dropped {} self-loop(s) and {} duplicate(s)",
            report.self_loops,
            report.duplicates
        );
    }
    Ok((graph, report))
}

pub fn read_edge_list(path: &Path, directed: bool) -> Result<(Graph, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_edge_list(&text, directed)
}

/// Outcome of removing edges for link prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train_graph: Graph,
    /// Held-out positives, canonical orientation.
    pub removed_edges: Vec<(usize, usize)>,
    /// Non-edges of the original graph, as many as `removed_edges`.
    pub negative_edges: Vec<(usize, usize)>,
}

/// Removes up to `fraction · |E|` edges while keeping the remainder connected,
/// and samples an equal number of negative pairs.
pub fn split_edges(graph: &Graph, fraction: f64, seed: u64) -> Result<EdgeSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_graph, removed_edges) = remove_edges_connected(graph, fraction, &mut rng)?;
    let negative_edges = sample_non_edges(graph, removed_edges.len(), &mut rng)?;
    Ok(EdgeSplit {
        train_graph,
        removed_edges,
        negative_edges,
    })
}

/// The removal half of [`split_edges`]: returns the reduced graph and the
/// removed edges (sorted). Edges of a random spanning tree are never removed.
pub fn remove_edges_connected<R: Rng + ?Sized>(
    graph: &Graph,
    fraction: f64,
    rng: &mut R,
) -> Result<(Graph, Vec<(usize, usize)>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    if !graph.is_connected() {
        return Err(Error::invalid("edge split needs a connected graph"));
    }
    let mut edges = graph.edges();
    edges.shuffle(rng);

    // Random spanning tree: the first edges of the shuffled order that join
    // two components are protected.
    let mut uf = UnionFind::new(graph.num_nodes());
    let mut protected = Vec::new();
    let mut removable = Vec::new();
    for &(u, v) in &edges {
        if uf.union(u, v) {
            protected.push((u, v));
        } else {
            removable.push((u, v));
        }
    }

    let requested = (fraction * graph.num_edges() as f64).floor() as usize;
    let take = requested.min(removable.len());
    if take < requested {
        log::warn!(
            "edge split: only {take} of {requested} requested edges can be removed without disconnecting the graph"
        );
    }
    let mut removed: Vec<_> = removable[..take].to_vec();
    let kept = protected.into_iter().chain(removable[take..].iter().copied());
    let (train_graph, _) = Graph::from_edges(graph.num_nodes(), graph.is_directed(), kept)?;
    if !train_graph.is_connected() {
        return Err(Error::Numeric("edge split disconnected the graph".into()));
    }
    removed.sort_unstable();
    Ok((train_graph, removed))
}

/// Uniform sample of `count` distinct node pairs with no edge in either
/// direction. Unordered (`u < v`) for undirected graphs.
fn sample_non_edges<R: Rng + ?Sized>(graph: &Graph, count: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let n = graph.num_nodes();
    let total_pairs = if graph.is_directed() {
        n * n.saturating_sub(1)
    } else {
        n * n.saturating_sub(1) / 2
    };
    // A directed non-edge must avoid both orientations.
    let blocked = if graph.is_directed() {
        let mut pairs = HashSet::new();
        for (u, v) in graph.edges() {
            pairs.insert((u, v));
            pairs.insert((v, u));
        }
        pairs.len()
    } else {
        graph.num_edges()
    };
    let available = total_pairs - blocked;
    if available < count {
        return Err(Error::invalid(format!(
            "cannot sample {count} negative pairs: only {available} non-edges among {n} nodes"
        )));
    }
    let candidate = |u: usize, v: usize| u != v && !graph.connected_pair(u, v);

    if count * 2 > available {
        let mut all = Vec::with_capacity(available);
        for u in 0..n {
            let start = if graph.is_directed() { 0 } else { u + 1 };
            for v in start..n {
                if candidate(u, v) {
                    all.push((u, v));
                }
            }
        }
        let (chosen, _) = all.partial_shuffle(rng, count);
        let mut out = chosen.to_vec();
        out.sort_unstable();
        return Ok(out);
    }

    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (mut u, mut v) = (rng.random_range(0..n), rng.random_range(0..n));
        if !graph.is_directed() && u > v {
            std::mem::swap(&mut u, &mut v);
        }
        if candidate(u, v) && chosen.insert((u, v)) {
            out.push((u, v));
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, false, edges.iter().copied()).unwrap().0
    }

    #[test]
    fn loads_simple_edge_list() {
        let (g, report) = load_edge_list("0 1\n1 2", false).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(report, LoadReport::default());
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn drops_self_loops_and_duplicates() {
        let (g, report) = load_edge_list("0 0\n0 1", false).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(report.self_loops, 1);

        let (g, report) = load_edge_list("# c\n0 1\n0 1", false).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(report.duplicates, 1);

        // Reverse orientation is a duplicate only when undirected.
        let (_, report) = load_edge_list("0 1\n1 0", false).unwrap();
        assert_eq!(report.duplicates, 1);
        let (g, report) = load_edge_list("0 1\n1 0", true).unwrap();
        assert_eq!((g.num_edges(), report.duplicates), (2, 0));
    }

    #[test]
    fn malformed_lines_name_the_line() {
        match load_edge_list("0 1\n1 x\n", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load_edge_list("0 1 2", false), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load_edge_list("-1 2", false), Err(Error::Parse { .. })));
        assert!(matches!(load_edge_list("# only\n\n", false), Err(Error::Parse { line: 0, .. })));
        assert!(load_edge_list("", true).is_err());
    }

    #[test]
    fn adjacency_matrices() {
        let a = undirected(3, &[(0, 1), (1, 2)]).adjacency_matrix();
        let expected = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(a, expected);
        assert_eq!(undirected(2, &[]).adjacency_matrix(), Matrix::zeros(2, 2));

        let (d, _) = Graph::from_edges(2, true, [(0, 1)]).unwrap();
        let a = d.adjacency_matrix();
        assert_eq!((a[(0, 1)], a[(1, 0)]), (1.0, 0.0));
    }

    #[test]
    fn laplacians() {
        let l = undirected(2, &[(0, 1)]).laplacian().unwrap();
        assert_eq!(l, Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap());
        assert_eq!(undirected(1, &[]).laplacian().unwrap(), Matrix::zeros(1, 1));

        let l = undirected(3, &[(0, 1), (1, 2), (0, 2)]).laplacian().unwrap();
        for i in 0..3 {
            assert_eq!(l[(i, i)], 2.0);
            assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(l[(i, j)], -1.0);
                }
            }
        }
        let (d, _) = Graph::from_edges(2, true, [(0, 1)]).unwrap();
        assert!(d.laplacian().is_err());
    }

    #[test]
    fn tree_split_removes_nothing() {
        let g = undirected(4, &[(0, 1), (1, 2), (1, 3)]);
        let split = split_edges(&g, 0.5, 7).unwrap();
        assert!(split.removed_edges.is_empty());
        assert!(split.negative_edges.is_empty());
        assert_eq!(split.train_graph, g);
    }

    #[test]
    fn triangle_split_removes_one_edge() {
        // Any single edge of a triangle can go; the other two stay connected.
        // A triangle has no non-edges, so only the removal half applies.
        let g = undirected(3, &[(0, 1), (1, 2), (0, 2)]);
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (train, removed) = remove_edges_connected(&g, 0.34, &mut rng).unwrap();
            assert_eq!(removed.len(), 1);
            assert!(train.is_connected());
            assert_eq!(train.num_edges(), 2);
        }
        assert!(split_edges(&g, 0.34, 0).is_err());

        // Triangle with a pendant node: one removal, one negative.
        let g = undirected(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]);
        let split = split_edges(&g, 0.34, 4).unwrap();
        assert_eq!(split.removed_edges.len(), 1);
        assert_eq!(split.negative_edges.len(), 1);
        assert!(split.train_graph.is_connected());
        assert_eq!(split, split_edges(&g, 0.34, 4).unwrap());
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let disconnected = undirected(4, &[(0, 1), (2, 3)]);
        assert!(split_edges(&disconnected, 0.5, 0).is_err());
        // Complete graph: no non-edges to sample.
        let k4 = undirected(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(split_edges(&k4, 0.5, 0).is_err());
        assert!(split_edges(&k4, 1.0, 0).is_err());
    }

    #[test]
    fn directed_negatives_avoid_both_orientations() {
        let (g, _) = Graph::from_edges(
            5,
            true,
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (1, 3)],
        )
        .unwrap();
        let split = split_edges(&g, 0.4, 3).unwrap();
        assert!(!split.removed_edges.is_empty());
        for &(u, v) in &split.negative_edges {
            assert!(!g.has_edge(u, v) && !g.has_edge(v, u));
        }
        assert!(split.train_graph.is_connected());
    }
}
