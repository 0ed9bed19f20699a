//! Synthetic graphs for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Stochastic block model with contiguous blocks. Returns the graph and each
/// node's block id.
pub fn stochastic_block_model(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    directed: bool,
    seed: u64,
) -> Result<(Graph, Vec<usize>)> {
    check_probability(p_in)?;
    check_probability(p_out)?;
    let labels: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();
    if n == 0 {
        return Err(Error::invalid("block model needs at least one node"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && v < u) {
                continue;
            }
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let (graph, _) = Graph::from_edges(n, directed, edges)?;
    Ok((graph, labels))
}

/// Directed G(n, p).
pub fn erdos_renyi_directed(n: usize, p: f64, seed: u64) -> Result<Graph> {
    check_probability(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok(Graph::from_edges(n, true, edges)?.0)
}

/// `0 - 1 - … - (n-1)`, oriented forward when directed.
pub fn path(n: usize, directed: bool) -> Graph {
    Graph::from_edges(n, directed, (1..n).map(|v| (v - 1, v)))
        .expect("path edges are in range")
        .0
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} not in [0, 1]")))
    }
}
