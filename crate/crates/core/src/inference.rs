//! Latent transmission-rate inference from cascades.
//!
//! Pairwise delays follow an exponential law with rate `W[i][j]`. A cascade's
//! likelihood combines, for every non-root active node, the chance that one
//! earlier node activated it while the others did not, and for every inactive
//! node, the chance that no active node reached it inside the window.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::diffusion::{Cascade, CascadeSet};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::textfmt::{data_lines, header_fields, sig9};

/// Lower clamp for every likelihood factor before taking logs.
pub const LIKELIHOOD_EPS: f64 = 1e-12;

/// Step used by the finite-difference gradient in [`mle_estimate`].
const FD_STEP: f64 = 1e-5;

/// Exponential transmission density `f(t_j | t_i; w)`.
#[inline]
pub fn pair_density(t_i: f64, t_j: f64, w: f64) -> f64 {
    if t_i < t_j {
        w * (-w * (t_j - t_i)).exp()
    } else {
        0.0
    }
}

/// How the "not activated by k" factor is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodMode {
    /// `1 - f(t_j | t_k)`, with `f` the density.
    #[default]
    PaperLiteral,
    /// The exponential survival function `exp(-w (t_j - t_k))`.
    Survival,
}

impl LikelihoodMode {
    #[inline]
    fn non_activation(self, t_k: f64, t_j: f64, w: f64) -> f64 {
        let raw = match self {
            LikelihoodMode::PaperLiteral => 1.0 - pair_density(t_k, t_j, w),
            LikelihoodMode::Survival => (-w * (t_j - t_k).max(0.0)).exp(),
        };
        raw.clamp(LIKELIHOOD_EPS, 1.0 - LIKELIHOOD_EPS)
    }
}

impl FromStr for LikelihoodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" | "literal" => Ok(LikelihoodMode::PaperLiteral),
            "survival" => Ok(LikelihoodMode::Survival),
            other => Err(Error::invalid(format!(
                "unknown likelihood mode {other:?} (expected paper-literal or survival)"
            ))),
        }
    }
}

impl fmt::Display for LikelihoodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LikelihoodMode::PaperLiteral => "paper-literal",
            LikelihoodMode::Survival => "survival",
        })
    }
}

/// Nonnegative `N×N` rate matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    n: usize,
    values: Vec<f64>,
}

impl TransmissionMatrix {
    pub fn zeros(n: usize) -> Self {
        TransmissionMatrix {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Validates a dense row-major matrix.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(Error::Dimension(format!("transmission matrix must be square, got {rows}x{cols}")));
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = m[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::invalid(format!("entry ({i}, {j}) = {w} is not a finite nonnegative rate")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::invalid(format!("diagonal entry ({i}, {i}) must be 0")));
                }
            }
        }
        Ok(TransmissionMatrix {
            n: rows,
            values: m.as_slice().to_vec(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets an off-diagonal entry; negatives and non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i == j || i >= self.n || j >= self.n || !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!("cannot set ({i}, {j}) to {w}")));
        }
        self.values[i * self.n + j] = w;
        Ok(())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.n, self.n, self.values.clone()).expect("square storage")
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Nonzero entries sorted by `(i, j)`.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let w = self.get(i, j);
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&w| w != 0.0).count()
    }

    /// Nonzero entries with no matching edge in `graph`.
    pub fn latent_tie_count(&self, graph: &Graph) -> usize {
        self.nonzeros()
            .into_iter()
            .filter(|&(i, j, _)| !graph.has_edge(i, j))
            .count()
    }

    fn column(&self, j: usize) -> impl Fn(usize) -> f64 + '_ {
        move |i| self.values[i * self.n + j]
    }
}

/// A cascade or cascade-set log-likelihood, with the number of non-root
/// activations that had no earlier activator (each scored `ln ε`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogLikelihood {
    pub value: f64,
    pub degenerate: usize,
}

impl std::ops::Add for LogLikelihood {
    type Output = LogLikelihood;

    fn add(self, rhs: Self) -> Self {
        LogLikelihood {
            value: self.value + rhs.value,
            degenerate: self.degenerate + rhs.degenerate,
        }
    }
}

/// Contribution of node `j` to a cascade's log-likelihood, given the rates
/// into `j` (`rate_into(i) = W[i][j]`). Returns `(value, degenerate)`.
fn node_term(
    cascade: &Cascade,
    j: usize,
    rate_into: impl Fn(usize) -> f64,
    window: f64,
    mode: LikelihoodMode,
) -> (f64, bool) {
    let floor = LIKELIHOOD_EPS.ln();
    if j == cascade.root() {
        return (0.0, false);
    }
    let t_j = cascade.time(j);
    if t_j.is_finite() {
        let mut hazard = 0.0;
        let mut log_survive = 0.0;
        let mut any = false;
        for &i in cascade.active().iter().take_while(|&&i| cascade.time(i) < t_j) {
            let (t_i, w) = (cascade.time(i), rate_into(i));
            let q = mode.non_activation(t_i, t_j, w);
            hazard += pair_density(t_i, t_j, w) / q;
            log_survive += q.ln();
            any = true;
        }
        if !any {
            return (floor, true);
        }
        ((hazard.ln() + log_survive).max(floor), false)
    } else {
        // Censored: nobody active reached j by the end of the window.
        let mut total = 0.0;
        for &i in cascade.active() {
            total += mode.non_activation(cascade.time(i), window, rate_into(i)).ln();
        }
        (total, false)
    }
}

fn check_cascade(cascade: &Cascade, w: &TransmissionMatrix) -> Result<()> {
    if cascade.num_nodes() != w.num_nodes() {
        return Err(Error::Dimension(format!(
            "cascade over {} nodes, matrix over {}",
            cascade.num_nodes(),
            w.num_nodes()
        )));
    }
    if cascade.time(cascade.root()) != 0.0 {
        return Err(Error::invalid("cascade root is not active at time 0"));
    }
    Ok(())
}

pub fn cascade_log_likelihood(
    cascade: &Cascade,
    w: &TransmissionMatrix,
    window: f64,
    mode: LikelihoodMode,
) -> Result<LogLikelihood> {
    check_cascade(cascade, w)?;
    let mut out = LogLikelihood::default();
    for j in 0..w.num_nodes() {
        let (value, degenerate) = node_term(cascade, j, w.column(j), window, mode);
        out.value += value;
        out.degenerate += degenerate as usize;
    }
    Ok(out)
}

/// Sum of cascade log-likelihoods over the set.
pub fn set_log_likelihood(set: &CascadeSet, w: &TransmissionMatrix, mode: LikelihoodMode) -> Result<LogLikelihood> {
    let mut total = LogLikelihood::default();
    for c in set.cascades() {
        total = total + cascade_log_likelihood(c, w, set.window(), mode)?;
    }
    Ok(total)
}

/// Log-likelihood terms that depend on column `j` of the rate matrix.
fn column_log_likelihood(set: &CascadeSet, j: usize, rate_into: impl Fn(usize) -> f64 + Copy, mode: LikelihoodMode) -> f64 {
    set.cascades()
        .iter()
        .map(|c| node_term(c, j, rate_into, set.window(), mode).0)
        .sum()
}

/// Per-column accumulators for the closed-form rule.
struct PairStats {
    sum: Vec<f64>,
    activated: Vec<u32>,
    censored: Vec<u32>,
}

fn column_stats(set: &CascadeSet, j: usize) -> PairStats {
    let n = set.num_nodes();
    let window = set.window();
    let mut stats = PairStats {
        sum: vec![0.0; n],
        activated: vec![0; n],
        censored: vec![0; n],
    };
    for c in set.cascades() {
        let t_j = c.time(j);
        if t_j.is_finite() {
            for &i in c.active().iter().take_while(|&&i| c.time(i) < t_j) {
                stats.sum[i] += 1.0 / (t_j - c.time(i));
                stats.activated[i] += 1;
            }
        } else {
            for &i in c.active() {
                let t_i = c.time(i);
                if t_i < window {
                    stats.sum[i] += 1.0 / (window - t_i);
                    stats.censored[i] += 1;
                }
            }
        }
    }
    stats
}

/// Closed-form rate estimate. For each ordered pair with at least one cascade
/// where `i` fires strictly before `j`, the rate is the pooled mean of
/// `1/(t_j - t_i)` over those cascades and `1/(T - t_i)` over cascades where
/// `i` fired and `j` never did. Other pairs, and entries below `threshold`,
/// are zero.
pub fn closed_form_estimate(set: &CascadeSet, threshold: f64) -> TransmissionMatrix {
    let n = set.num_nodes();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let stats = column_stats(set, j);
            (0..n)
                .map(|i| {
                    let hits = stats.activated[i];
                    if i == j || hits == 0 {
                        return 0.0;
                    }
                    let w = stats.sum[i] / f64::from(hits + stats.censored[i]);
                    if w < threshold {
                        0.0
                    } else {
                        w
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (j, col) in columns.iter().enumerate() {
        for (i, &w) in col.iter().enumerate() {
            values[i * n + j] = w;
        }
    }
    TransmissionMatrix { n, values }
}

/// Pairs `(i, j)` with some cascade where `i` fires strictly before `j`.
pub fn co_occurring_pairs(set: &CascadeSet) -> Vec<Vec<usize>> {
    (0..set.num_nodes())
        .into_par_iter()
        .map(|j| {
            let stats = column_stats(set, j);
            (0..set.num_nodes())
                .filter(|&i| i != j && stats.activated[i] > 0)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub steps: usize,
    pub step_size: f64,
    pub mode: LikelihoodMode,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            steps: 50,
            step_size: 1e-3,
            mode: LikelihoodMode::PaperLiteral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOutcome {
    pub matrix: TransmissionMatrix,
    pub initial_objective: f64,
    pub objective: f64,
    /// Accepted ascent steps.
    pub accepted_steps: usize,
}

/// Projected gradient ascent on [`set_log_likelihood`].
///
/// Gradients are central finite differences over co-occurring pairs; other
/// entries keep their initial value. A step that lowers the objective is
/// retried at half the size, so the returned iterate is the best one seen.
pub fn mle_estimate(set: &CascadeSet, init: &TransmissionMatrix, options: MleOptions) -> Result<MleOutcome> {
    if options.steps == 0 {
        return Err(Error::invalid("mle needs at least one step"));
    }
    if !(options.step_size > 0.0) {
        return Err(Error::invalid(format!("mle step size {} must be positive", options.step_size)));
    }
    if init.num_nodes() != set.num_nodes() {
        return Err(Error::Dimension(format!(
            "initial matrix over {} nodes, cascades over {}",
            init.num_nodes(),
            set.num_nodes()
        )));
    }
    let mode = options.mode;
    let initial_objective = set_log_likelihood(set, init, mode)?.value;
    if !initial_objective.is_finite() {
        return Err(Error::Numeric(format!("initial objective is {initial_objective}")));
    }
    let pairs = co_occurring_pairs(set);
    let n = set.num_nodes();

    let mut current = init.clone();
    let mut objective = initial_objective;
    let mut step = options.step_size;
    let mut accepted_steps = 0;

    for _ in 0..options.steps {
        let gradient = mle_gradient(set, &current, &pairs, mode);
        let mut accepted = false;
        for _ in 0..30 {
            let mut candidate = current.clone();
            for (j, rows) in pairs.iter().enumerate() {
                for (&i, &g) in rows.iter().zip(&gradient[j]) {
                    candidate.values[i * n + j] = (current.get(i, j) + step * g).max(0.0);
                }
            }
            let value = set_log_likelihood(set, &candidate, mode)?.value;
            if value.is_finite() && value >= objective {
                accepted = value > objective;
                current = candidate;
                objective = value;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        accepted_steps += 1;
    }
    Ok(MleOutcome {
        matrix: current,
        initial_objective,
        objective,
        accepted_steps,
    })
}

/// Finite-difference gradient, one entry per `pairs[j][k]`.
fn mle_gradient(set: &CascadeSet, w: &TransmissionMatrix, pairs: &[Vec<usize>], mode: LikelihoodMode) -> Vec<Vec<f64>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(j, rows)| {
            rows.iter()
                .map(|&i| {
                    let base = w.get(i, j);
                    let (lo, hi) = ((base - FD_STEP).max(0.0), base + FD_STEP);
                    let at = |value: f64| {
                        column_log_likelihood(
                            set,
                            j,
                            |k| if k == i { value } else { w.get(k, j) },
                            mode,
                        )
                    };
                    (at(hi) - at(lo)) / (hi - lo)
                })
                .collect()
        })
        .collect()
}

/// How rate matrices are squashed into `[0, 1]` before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureScaling {
    /// `w / max(W)`.
    Linear,
    /// `ln(1 + w) / ln(1 + max(W))`; tames the heavy tail of the closed form.
    #[default]
    Log,
    /// Rank of each nonzero within its row over the row's nonzero count.
    RowRank,
}

impl FromStr for FeatureScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FeatureScaling::Linear),
            "log" => Ok(FeatureScaling::Log),
            "row-rank" => Ok(FeatureScaling::RowRank),
            other => Err(Error::invalid(format!("unknown scaling {other:?} (expected linear, log or row-rank)"))),
        }
    }
}

impl fmt::Display for FeatureScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureScaling::Linear => "linear",
            FeatureScaling::Log => "log",
            FeatureScaling::RowRank => "row-rank",
        })
    }
}

fn rescale(mut m: Matrix, scaling: FeatureScaling) -> Matrix {
    let max = m.max();
    if !(max > 0.0) {
        return Matrix::zeros(m.rows(), m.cols());
    }
    match scaling {
        FeatureScaling::Linear => m.scale(1.0 / max),
        FeatureScaling::Log => {
            let denom = max.ln_1p();
            m.as_mut_slice().iter_mut().for_each(|v| *v = v.ln_1p() / denom);
        }
        FeatureScaling::RowRank => {
            for r in 0..m.rows() {
                let row = m.row_mut(r);
                let mut order: Vec<usize> = (0..row.len()).filter(|&c| row[c] > 0.0).collect();
                order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
                let count = order.len() as f64;
                for (k, c) in order.into_iter().enumerate() {
                    row[c] = (k + 1) as f64 / count;
                }
            }
        }
    }
    m
}

/// Auto-encoder input `X = W / max(W)`.
pub fn feature_matrix(w: &TransmissionMatrix) -> Matrix {
    feature_matrix_scaled(w, FeatureScaling::Linear)
}

pub fn feature_matrix_scaled(w: &TransmissionMatrix, scaling: FeatureScaling) -> Matrix {
    rescale(w.to_matrix(), scaling)
}

/// Symmetrized pair weights `(W + Wᵀ)/2`, scaled by their maximum.
pub fn symmetric_weights(w: &TransmissionMatrix) -> Matrix {
    symmetric_weights_scaled(w, FeatureScaling::Linear)
}

pub fn symmetric_weights_scaled(w: &TransmissionMatrix, scaling: FeatureScaling) -> Matrix {
    let n = w.num_nodes();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (w.get(i, j) + w.get(j, i));
        }
    }
    rescale(m, scaling)
}

/// Text form: `#N=<nodes>` then `i j w` for every nonzero entry, sorted.
pub fn write_matrix(w: &TransmissionMatrix) -> String {
    let mut out = format!("#N={}\n", w.num_nodes());
    for (i, j, v) in w.nonzeros() {
        out.push_str(&format!("{i} {j} {}\n", sig9(v)));
    }
    out
}

pub fn read_matrix(text: &str) -> Result<TransmissionMatrix> {
    const WHAT: &str = "transmission matrix";
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .filter(|l| l.starts_with('#'))
        .and_then(|l| header_fields(l).find(|(k, _)| *k == "N"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .filter(|&n| n <= crate::graph::MAX_DENSE_NODES);
    let Some(n) = header else {
        return Err(Error::parse(
            WHAT,
            1,
            format!("expected header \"#N=<nodes>\" with N at most {}", crate::graph::MAX_DENSE_NODES),
        ));
    };
    let mut w = TransmissionMatrix::zeros(n);
    let mut last = None;
    for (line_no, line) in data_lines(text) {
        let toks: Vec<&str> = line.split_ascii_whitespace().collect();
        let parsed = match toks.as_slice() {
            [i, j, v] => i
                .parse::<usize>()
                .ok()
                .zip(j.parse::<usize>().ok())
                .zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let Some(((i, j), v)) = parsed else {
            return Err(Error::parse(WHAT, line_no, "expected \"i j w\""));
        };
        if last.is_some_and(|prev| prev >= (i, j)) {
            return Err(Error::parse(WHAT, line_no, "entries must be sorted by (i, j) without repeats"));
        }
        last = Some((i, j));
        w.set(i, j, v).map_err(|e| Error::parse(WHAT, line_no, e.to_string()))?;
    }
    Ok(w)
}

pub fn read_matrix_file(path: &Path) -> Result<TransmissionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_matrix(&text)
}
