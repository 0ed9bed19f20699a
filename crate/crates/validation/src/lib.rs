//! Independent reference implementations used to check `latentmesh`.

use latentmesh::graph::generators::stochastic_block_model;
use latentmesh::Graph;

const EPS: f64 = 1e-12;

/// Straight nested-loop log-likelihood of one cascade.
///
/// `times[v]` is `f64::INFINITY` for nodes that never fired, `w[i][j]` is the
/// rate from `i` to `j`. With `survival` the non-activation factor is
/// `exp(-w dt)`, otherwise `1 - w exp(-w dt)`.
pub fn brute_force_log_likelihood(times: &[f64], root: usize, w: &[Vec<f64>], window: f64, survival: bool) -> f64 {
    let n = times.len();
    let density = |ti: f64, tj: f64, rate: f64| if ti < tj { rate * (-rate * (tj - ti)).exp() } else { 0.0 };
    let factor = |ti: f64, tj: f64, rate: f64| {
        let raw = if survival {
            (-rate * (tj - ti)).exp()
        } else {
            1.0 - density(ti, tj, rate)
        };
        raw.clamp(EPS, 1.0 - EPS)
    };
    let mut total = 0.0;
    for j in 0..n {
        if j == root {
            continue;
        }
        if times[j].is_finite() {
            let mut sum = 0.0;
            let mut has_parent = false;
            for k in 0..n {
                if times[k] >= times[j] {
                    continue;
                }
                has_parent = true;
                let mut product = density(times[k], times[j], w[k][j]);
                for i in 0..n {
                    if i != k && times[i] < times[j] {
                        product *= factor(times[i], times[j], w[i][j]);
                    }
                }
                sum += product;
            }
            total += if has_parent { sum.ln().max(EPS.ln()) } else { EPS.ln() };
        } else {
            for i in 0..n {
                if times[i].is_finite() {
                    total += factor(times[i], window, w[i][j]).ln();
                }
            }
        }
    }
    total
}

/// Central-difference gradient of `f` at `params`.
pub fn central_difference(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + step;
        let up = f(&p);
        p[k] = orig - step;
        let down = f(&p);
        p[k] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Largest elementwise relative error, with a floor on the denominator.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Probability that a random positive outranks a random negative, ties half.
pub fn pairwise_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in positives {
        for q in negatives {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// Two equal undirected blocks of 50 nodes, `p_in = 0.25`, `p_out = 0.02`.
pub fn toy_sbm(seed: u64) -> (Graph, Vec<usize>) {
    stochastic_block_model(&[50, 50], 0.25, 0.02, false, seed).expect("valid block model")
}
