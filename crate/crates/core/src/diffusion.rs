//! Continuous-time diffusion sampling over an observed graph.
//!
//! Each cascade is a susceptible-infected process: when a node activates at
//! `t_u`, every still-inactive out-neighbour draws a candidate time
//! `t_u + Exp(rate)` and activates at the earliest candidate. Candidates past
//! the window `T` are dropped, so the simulation is a Dijkstra sweep over
//! random edge delays.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::textfmt::{header_fields, sig9};

/// Activation times of one diffusion run. Inactive nodes hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    root: usize,
    times: Vec<f64>,
    /// Active nodes sorted by (time, id).
    order: Vec<usize>,
}

impl Cascade {
    /// Builds a cascade from explicit activations. The root must be listed
    /// with time exactly 0, and every time must lie in `[0, window]`.
    pub fn new(num_nodes: usize, root: usize, activations: &[(usize, f64)], window: f64) -> Result<Cascade> {
        if root >= num_nodes {
            return Err(Error::invalid(format!("root {root} out of range for {num_nodes} nodes")));
        }
        let mut times = vec![f64::INFINITY; num_nodes];
        for &(node, t) in activations {
            if node >= num_nodes {
                return Err(Error::invalid(format!("node {node} out of range for {num_nodes} nodes")));
            }
            if !(0.0..=window).contains(&t) {
                return Err(Error::invalid(format!("time {t} for node {node} outside [0, {window}]")));
            }
            if times[node].is_finite() {
                return Err(Error::invalid(format!("node {node} activated twice")));
            }
            times[node] = t;
        }
        if times[root] != 0.0 {
            return Err(Error::invalid(format!("root {root} must be active at time 0")));
        }
        Ok(Cascade::from_times(root, times))
    }

    fn from_times(root: usize, times: Vec<f64>) -> Cascade {
        let mut order: Vec<usize> = (0..times.len()).filter(|&v| times[v].is_finite()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
        // Keep the root first even if another node also sits at time 0.
        if let Some(pos) = order.iter().position(|&v| v == root) {
            order[..=pos].rotate_right(1);
        }
        Cascade { root, times, order }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn num_nodes(&self) -> usize {
        self.times.len()
    }

    /// Activation time, `INFINITY` when inactive.
    #[inline]
    pub fn time(&self, node: usize) -> f64 {
        self.times[node]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.times[node].is_finite()
    }

    /// Active nodes in activation order, root first.
    pub fn active(&self) -> &[usize] {
        &self.order
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSet {
    window: f64,
    num_nodes: usize,
    cascades: Vec<Cascade>,
}

impl CascadeSet {
    pub fn new(window: f64, num_nodes: usize, cascades: Vec<Cascade>) -> Result<CascadeSet> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::invalid(format!("time window {window} must be positive")));
        }
        if cascades.is_empty() {
            return Err(Error::invalid("a cascade set needs at least one cascade"));
        }
        for (k, c) in cascades.iter().enumerate() {
            if c.num_nodes() != num_nodes {
                return Err(Error::Dimension(format!(
                    "cascade {k} covers {} nodes, set has {num_nodes}",
                    c.num_nodes()
                )));
            }
            if c.order.iter().any(|&v| c.times[v] > window) {
                return Err(Error::invalid(format!("cascade {k} exceeds window {window}")));
            }
        }
        Ok(CascadeSet {
            window,
            num_nodes,
            cascades,
        })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn cascades(&self) -> &[Cascade] {
        &self.cascades
    }

    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    pub fn mean_size(&self) -> f64 {
        self.cascades.iter().map(|c| c.size() as f64).sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    node: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs one diffusion from `root`, keeping activations up to `window`.
pub fn simulate_cascade<R: Rng + ?Sized>(
    graph: &Graph,
    root: usize,
    rate: f64,
    window: f64,
    rng: &mut R,
) -> Result<Cascade> {
    let n = graph.num_nodes();
    if root >= n {
        return Err(Error::invalid(format!("root {root} out of range for {n} nodes")));
    }
    if !(window > 0.0) {
        return Err(Error::invalid(format!("time window {window} must be positive")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("transmission rate {rate} must be positive")));
    }
    let delay = Exp::new(rate).map_err(|e| Error::invalid(e.to_string()))?;

    let mut times = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut queue = BinaryHeap::new();
    times[root] = 0.0;
    queue.push(Event { time: 0.0, node: root });

    while let Some(Event { time, node }) = queue.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        for &v in graph.neighbors(node) {
            if settled[v] {
                continue;
            }
            let candidate = time + delay.sample(rng);
            if candidate <= window && candidate < times[v] {
                times[v] = candidate;
                queue.push(Event { time: candidate, node: v });
            }
        }
    }
    Ok(Cascade::from_times(root, times))
}

/// Generator for the `repetition`-th cascade rooted at `root`.
pub fn cascade_rng(seed: u64, root: usize, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((root as u64) << 32) ^ repetition as u64);
    rng
}

/// `repetitions` cascades from every node; cascade `r·N + v` is the r-th run
/// rooted at `v`.
pub fn sample_cascades(
    graph: &Graph,
    rate: f64,
    window: f64,
    repetitions: usize,
    seed: u64,
) -> Result<CascadeSet> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::invalid("cannot sample cascades on an empty graph"));
    }
    if repetitions == 0 {
        return Err(Error::invalid("repetitions per root must be at least 1"));
    }
    let cascades = (0..n * repetitions)
        .into_par_iter()
        .map(|k| {
            let (rep, root) = (k / n, k % n);
            simulate_cascade(graph, root, rate, window, &mut cascade_rng(seed, root, rep))
        })
        .collect::<Result<Vec<_>>>()?;
    CascadeSet::new(window, n, cascades)
}

/// Text form: a `#T=<window> N=<nodes>` header, then one cascade per line as
/// `node:time` tokens in activation order, root first.
pub fn write_cascades(set: &CascadeSet) -> String {
    let mut out = format!("#T={} N={}\n", sig9(set.window), set.num_nodes);
    for c in &set.cascades {
        let line: Vec<String> = c
            .active()
            .iter()
            .map(|&v| format!("{v}:{}", sig9(c.time(v))))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Upper bound on `N × K` for cascade files.
pub const MAX_CASCADE_ENTRIES: usize = 1 << 27;

pub fn read_cascades(text: &str) -> Result<CascadeSet> {
    const WHAT: &str = "cascade file";
    let mut header = None;
    let mut cascades = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if header.is_none() && cascades.is_empty() {
                let (mut window, mut nodes) = (None, None);
                for (key, value) in header_fields(line) {
                    match key {
                        "T" => window = value.parse::<f64>().ok(),
                        "N" => nodes = value.parse::<usize>().ok(),
                        _ => {}
                    }
                }
                match (window, nodes) {
                    (Some(t), Some(n)) if t > 0.0 && t.is_finite() && n <= crate::graph::MAX_DENSE_NODES => header = Some((t, n)),
                    _ => return Err(Error::parse(WHAT, line_no, "expected header \"#T=<window> N=<nodes>\"")),
                }
            }
            continue;
        }
        let Some((window, n)) = header else {
            return Err(Error::parse(WHAT, line_no, "missing \"#T=<window> N=<nodes>\" header"));
        };
        if n.saturating_mul(cascades.len() + 1) > MAX_CASCADE_ENTRIES {
            return Err(Error::parse(WHAT, line_no, format!("more than {MAX_CASCADE_ENTRIES} node-cascade entries")));
        }
        let mut activations = Vec::new();
        for tok in line.split_ascii_whitespace() {
            let parsed = tok
                .split_once(':')
                .and_then(|(v, t)| Some((v.parse::<usize>().ok()?, t.parse::<f64>().ok()?)));
            let Some((node, t)) = parsed else {
                return Err(Error::parse(WHAT, line_no, format!("bad token {tok:?}, expected node:time")));
            };
            activations.push((node, t));
        }
        let (root, root_time) = activations[0];
        if root_time != 0.0 {
            return Err(Error::parse(WHAT, line_no, "first token must be the root at time 0"));
        }
        let cascade = Cascade::new(n, root, &activations, window)
            .map_err(|e| Error::parse(WHAT, line_no, e.to_string()))?;
        cascades.push(cascade);
    }
    let Some((window, n)) = header else {
        return Err(Error::parse(WHAT, 0, "missing \"#T=<window> N=<nodes>\" header"));
    };
    if cascades.is_empty() {
        return Err(Error::parse(WHAT, 0, "no cascades"));
    }
    CascadeSet::new(window, n, cascades)
}

pub fn read_cascades_file(path: &Path) -> Result<CascadeSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_cascades(&text)
}
