//! Downstream scoring of embeddings: link prediction and node classification.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{split_edges, EdgeSplit, Graph, MAX_NODES};
use crate::matrix::Matrix;
use crate::textfmt::{data_lines, sig9};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeOperator {
    #[default]
    Hadamard,
    WeightedL2,
}

impl fmt::Display for EdgeOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeOperator::Hadamard => "hadamard",
            EdgeOperator::WeightedL2 => "weighted-l2",
        })
    }
}

impl FromStr for EdgeOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hadamard" => Ok(EdgeOperator::Hadamard),
            "weighted-l2" | "l2" => Ok(EdgeOperator::WeightedL2),
            other => Err(Error::invalid(format!("unknown edge operator {other:?}"))),
        }
    }
}

pub fn edge_features(yu: &[f64], yv: &[f64], op: EdgeOperator) -> Result<Vec<f64>> {
    if yu.len() != yv.len() {
        return Err(Error::Dimension(format!("embedding widths {} and {}", yu.len(), yv.len())));
    }
    Ok(yu
        .iter()
        .zip(yv)
        .map(|(a, b)| match op {
            EdgeOperator::Hadamard => a * b,
            EdgeOperator::WeightedL2 => (a - b) * (a - b),
        })
        .collect())
}

fn pair_features(y: &Matrix, pairs: &[(usize, usize)], op: EdgeOperator) -> Result<Matrix> {
    let mut data = Vec::with_capacity(pairs.len() * y.cols());
    for &(u, v) in pairs {
        if u >= y.rows() || v >= y.rows() {
            return Err(Error::Dimension(format!("pair ({u}, {v}) outside {} embeddings", y.rows())));
        }
        data.extend(edge_features(y.row(u), y.row(v), op)?);
    }
    Matrix::from_vec(pairs.len(), y.cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub penalty: f64,
    pub epochs: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            penalty: 1e-4,
            epochs: 500,
        }
    }
}

/// Binary logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pub penalty: f64,
}

impl LogisticModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Log-odds of the positive class.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.weights)
                .zip(self.mean.iter().zip(&self.scale))
                .map(|((v, w), (m, s))| w * (v - m) / s)
                .sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `penalty/2 · ‖w‖²` at the given parameters, on
/// standardized rows.
fn objective(z: &Matrix, labels: &[bool], w: &[f64], b: f64, penalty: f64) -> f64 {
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let t = b + z.row(r).iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // ln(1 + e^{-s·t}) computed stably
        let m = if y { -t } else { t };
        loss += m.max(0.0) + (-m.abs()).exp().ln_1p();
    }
    loss / labels.len() as f64 + 0.5 * penalty * w.iter().map(|v| v * v).sum::<f64>()
}

/// Full-batch gradient descent. Returns the model and the objective after
/// every epoch (index 0 is the starting point).
pub fn train_logistic_traced(
    features: &Matrix,
    labels: &[bool],
    options: LogisticOptions,
) -> Result<(LogisticModel, Vec<f64>)> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    if !(options.penalty.is_finite() && options.penalty >= 0.0) {
        return Err(Error::invalid(format!("penalty must be nonnegative, got {}", options.penalty)));
    }
    if !features.is_finite() {
        return Err(Error::Numeric("non-finite features".into()));
    }

    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for r in 0..n {
        for ((s, v), m) in scale.iter_mut().zip(features.row(r)).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let mut z = features.clone();
    for r in 0..n {
        for ((v, m), s) in z.row_mut(r).iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }

    let curvature = 0.25 * augmented_top_eigenvalue(&z) * 1.05;
    let weight_step = 1.0 / (curvature + options.penalty);
    let bias_step = 1.0 / curvature;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut trace = Vec::with_capacity(options.epochs + 1);
    trace.push(objective(&z, labels, &w, b, options.penalty));
    let mut gw = vec![0.0; d];
    for _ in 0..options.epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row(r);
            let t = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let residual = sigmoid(t) - if y { 1.0 } else { 0.0 };
            gb += residual;
            for (g, a) in gw.iter_mut().zip(row) {
                *g += residual * a;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= weight_step * (g / n as f64 + options.penalty * *wi);
        }
        b -= bias_step * gb / n as f64;
        trace.push(objective(&z, labels, &w, b, options.penalty));
    }
    Ok((
        LogisticModel {
            weights: w,
            bias: b,
            mean,
            scale,
            penalty: options.penalty,
        },
        trace,
    ))
}

pub fn train_logistic(features: &Matrix, labels: &[bool], options: LogisticOptions) -> Result<LogisticModel> {
    train_logistic_traced(features, labels, options).map(|(m, _)| m)
}

/// Largest eigenvalue of `[Z 1]ᵀ[Z 1] / n` by power iteration.
fn augmented_top_eigenvalue(z: &Matrix) -> f64 {
    let (n, d) = z.shape();
    let mut v = vec![1.0; d + 1];
    let mut lambda = 1.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d + 1];
        for r in 0..n {
            let row = z.row(r);
            let dot = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
            for (o, a) in out.iter_mut().zip(row) {
                *o += dot * a;
            }
            out[d] += dot;
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt() / n as f64;
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = out.iter().map(|x| x / (norm * n as f64)).collect();
    }
    lambda.max(1e-12)
}

/// One binary model per class; classes with no training example are never
/// predicted.
#[derive(Debug, Clone)]
pub struct OneVsRest {
    models: Vec<Option<LogisticModel>>,
}

impl OneVsRest {
    pub fn num_classes(&self) -> usize {
        self.models.len()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (class, model) in self.models.iter().enumerate() {
            if let Some(m) = model {
                let score = m.decision(x);
                if score > best.1 {
                    best = (class, score);
                }
            }
        }
        best.0
    }
}

pub fn one_vs_rest(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    options: LogisticOptions,
) -> Result<OneVsRest> {
    if labels.len() != features.rows() {
        return Err(Error::Dimension(format!("{} labels for {} rows", labels.len(), features.rows())));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(Error::invalid(format!("label {bad} outside {num_classes} classes")));
    }
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("one-vs-rest needs at least two classes in the training set"));
    }
    let mut models = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        if !present[class] {
            log::warn!("class {class} has no training examples and will never be predicted");
            models.push(None);
            continue;
        }
        let binary: Vec<bool> = labels.iter().map(|&c| c == class).collect();
        models.push(Some(train_logistic(features, &binary, options)?));
    }
    Ok(OneVsRest { models })
}

/// Rank-statistic AUC (ties count half) and the threshold-sweep ROC.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<(f64, Vec<(f64, f64)>)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both positive and negative examples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        rank_sum += mid_rank * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (p, q) = (pos as f64, neg as f64);
    let auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);

    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let threshold = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == threshold {
            if labels[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        roc.push((fp as f64 / q, tp as f64 / p));
    }
    Ok((auc, roc))
}

/// Trapezoidal area under a ROC polyline.
pub fn roc_area(roc: &[(f64, f64)]) -> f64 {
    roc.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Micro and macro F1 over `classes`.
pub fn f1_scores(predicted: &[usize], actual: &[usize], classes: &[usize]) -> Result<(f64, f64)> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut macro_sum = 0.0;
    for &c in classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fneg = 0;
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p == c, a == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        macro_sum += f1(tp, fp, fneg);
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
    }
    let macro_f1 = if classes.is_empty() {
        0.0
    } else {
        macro_sum / classes.len() as f64
    };
    Ok((f1(tp_all, fp_all, fn_all), macro_f1))
}

fn f1(tp: usize, fp: usize, fneg: usize) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
}

/// Classifies held-out edges against sampled non-edges from edge features;
/// the classifier sees a stratified half of the pairs and is scored on the
/// other half.
pub fn link_prediction_experiment(
    split: &EdgeSplit,
    embeddings: &Matrix,
    op: EdgeOperator,
    options: LogisticOptions,
    seed: u64,
) -> Result<LinkReport> {
    let n = split.train_graph.num_nodes();
    if embeddings.rows() != n {
        return Err(Error::Dimension(format!("{} embeddings for {n} nodes", embeddings.rows())));
    }
    if split.removed_edges.len() < 2 || split.negative_edges.len() < 2 {
        return Err(Error::invalid("link prediction needs at least two held-out edges and two non-edges"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = split.removed_edges.clone();
    let mut neg = split.negative_edges.clone();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let (pos_train, pos_test) = pos.split_at(pos.len() / 2);
    let (neg_train, neg_test) = neg.split_at(neg.len() / 2);

    let assemble = |p: &[(usize, usize)], q: &[(usize, usize)]| -> Result<(Matrix, Vec<bool>)> {
        let pairs: Vec<(usize, usize)> = p.iter().chain(q).copied().collect();
        let labels = std::iter::repeat_n(true, p.len()).chain(std::iter::repeat_n(false, q.len())).collect();
        Ok((pair_features(embeddings, &pairs, op)?, labels))
    };
    let (train_x, train_y) = assemble(pos_train, neg_train)?;
    let (test_x, test_y) = assemble(pos_test, neg_test)?;
    let model = train_logistic(&train_x, &train_y, options)?;
    let scores: Vec<f64> = (0..test_x.rows()).map(|r| model.decision(test_x.row(r))).collect();
    let (auc, roc) = auc_roc(&scores, &test_y)?;
    Ok(LinkReport { auc, roc })
}

/// Splits `graph`, hands only the training graph to `embedder`, then scores
/// the result.
pub fn run_link_prediction(
    graph: &Graph,
    fraction: f64,
    op: EdgeOperator,
    options: LogisticOptions,
    seed: u64,
    embedder: impl FnOnce(&Graph) -> Result<Matrix>,
) -> Result<LinkReport> {
    let split = split_edges(graph, fraction, seed)?;
    let embeddings = embedder(&split.train_graph)?;
    link_prediction_experiment(&split, &embeddings, op, options, seed.wrapping_add(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioScore {
    #[serde(skip)]
    pub ratio: f64,
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
}

/// Mean micro/macro F1 over `runs` stratified splits for each training ratio.
pub fn node_classification_experiment(
    embeddings: &Matrix,
    labels: &[usize],
    ratios: &[f64],
    runs: usize,
    options: LogisticOptions,
    seed: u64,
) -> Result<Vec<RatioScore>> {
    if labels.len() != embeddings.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.rows()
        )));
    }
    if runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (node, &c) in labels.iter().enumerate() {
        by_class[c].push(node);
    }
    if by_class.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(Error::invalid("node classification needs at least two classes"));
    }
    let mut report = Vec::with_capacity(ratios.len());
    for (ri, &ratio) in ratios.iter().enumerate() {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid(format!("training ratio {ratio} not in (0, 1)")));
        }
        let (mut micro, mut macro_) = (0.0, 0.0);
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((ri * runs + run) as u64);
            let (mut train, mut test) = (Vec::new(), Vec::new());
            let mut scored_classes = Vec::new();
            for (class, members) in by_class.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let mut members = members.clone();
                members.shuffle(&mut rng);
                let take = (ratio * members.len() as f64).round() as usize;
                if take == 0 || take == members.len() {
                    log::warn!("ratio {ratio} leaves class {class} without training or test nodes");
                } else {
                    scored_classes.push(class);
                }
                train.extend_from_slice(&members[..take]);
                test.extend_from_slice(&members[take..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            let train_labels: Vec<usize> = train.iter().map(|&v| labels[v]).collect();
            let classifier = one_vs_rest(&embeddings.select_rows(&train), &train_labels, num_classes, options)?;
            let predicted: Vec<usize> = test.iter().map(|&v| classifier.predict(embeddings.row(v))).collect();
            let actual: Vec<usize> = test.iter().map(|&v| labels[v]).collect();
            let (mi, ma) = f1_scores(&predicted, &actual, &scored_classes)?;
            micro += mi;
            macro_ += ma;
        }
        report.push(RatioScore {
            ratio,
            micro: micro / runs as f64,
            macro_: macro_ / runs as f64,
        });
    }
    Ok(report)
}

/// `start..end step s` or a comma-separated list.
pub fn parse_ratios(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let bad = || Error::invalid(format!("cannot parse ratios {text:?}"));
    let ratios: Vec<f64> = if let Some((range, step)) = text.split_once("step") {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let step: f64 = step.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0 && lo <= hi) {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::invalid(format!("ratios {text:?} must lie in (0, 1)")));
    }
    Ok(ratios)
}

/// Metrics file contents. Absent measurements serialize as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub roc: Vec<[f64; 2]>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_ratio: BTreeMap<String, RatioScore>,
    pub config_echo: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn with_link(mut self, link: &LinkReport) -> Self {
        self.auc = Some(link.auc);
        self.roc = link.roc.iter().map(|&(a, b)| [a, b]).collect();
        self
    }

    /// Top-level F1 values are the means over ratios.
    pub fn with_classification(mut self, scores: &[RatioScore]) -> Self {
        if !scores.is_empty() {
            let k = scores.len() as f64;
            self.micro_f1 = Some(scores.iter().map(|s| s.micro).sum::<f64>() / k);
            self.macro_f1 = Some(scores.iter().map(|s| s.macro_).sum::<f64>() / k);
        }
        self.per_ratio = scores.iter().map(|s| (sig9(s.ratio), *s)).collect();
        self
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("metrics serialize");
        text.push('\n');
        text
    }
}

/// `node label` per line; every node in `0..N` must be labelled once.
pub fn read_labels(text: &str) -> Result<Vec<usize>> {
    const WHAT: &str = "labels";
    let mut labels: Vec<Option<usize>> = Vec::new();
    for (line_no, line) in data_lines(text) {
        let toks: Vec<&str> = line.split_ascii_whitespace().collect();
        let [node, label] = toks.as_slice() else {
            return Err(Error::parse(WHAT, line_no, "expected \"node label\""));
        };
        let node: usize = node
            .parse()
            .ok()
            .filter(|&v| v < MAX_NODES)
            .ok_or_else(|| Error::parse(WHAT, line_no, format!("bad node id {node:?}")))?;
        let label: usize = label
            .parse()
            .ok()
            .filter(|&v| v < MAX_NODES)
            .ok_or_else(|| Error::parse(WHAT, line_no, format!("bad label {label:?}")))?;
        if node >= labels.len() {
            labels.resize(node + 1, None);
        }
        if labels[node].replace(label).is_some() {
            return Err(Error::parse(WHAT, line_no, format!("node {node} labelled twice")));
        }
    }
    if labels.is_empty() {
        return Err(Error::parse(WHAT, 0, "no labels"));
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| l.ok_or_else(|| Error::parse(WHAT, 0, format!("node {node} has no label"))))
        .collect()
}

pub fn read_labels_file(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_labels(&text)
}

pub fn write_labels(labels: &[usize]) -> String {
    labels.iter().enumerate().map(|(v, l)| format!("{v} {l}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn edge_feature_examples() {
        assert_eq!(edge_features(&[1.0, 2.0], &[3.0, 4.0], EdgeOperator::Hadamard).unwrap(), vec![3.0, 8.0]);
        assert_eq!(edge_features(&[1.0, 2.0], &[3.0, 4.0], EdgeOperator::WeightedL2).unwrap(), vec![4.0, 4.0]);
        assert_eq!(edge_features(&[1.5, -2.0], &[1.5, -2.0], EdgeOperator::WeightedL2).unwrap(), vec![0.0, 0.0]);
        assert!(edge_features(&[1.0], &[1.0, 2.0], EdgeOperator::Hadamard).is_err());
    }

    #[test]
    fn auc_examples() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, true, false, true];
        let (auc, roc) = auc_roc(&scores, &labels).unwrap();
        assert_eq!(auc, brute_auc(&scores, &labels));
        assert_eq!(auc, 1.0);
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));

        let mixed = [0.1, 0.4, 0.35, 0.3];
        let (auc, _) = auc_roc(&mixed, &labels).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(auc, brute_auc(&mixed, &labels));

        let (flat, roc) = auc_roc(&[0.3; 4], &labels).unwrap();
        assert_eq!(flat, 0.5);
        assert_eq!(roc, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(auc_roc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_scores(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap(), (1.0, 1.0));
        let (micro, macro_) = f1_scores(&[0, 0, 0, 0], &[0, 0, 1, 1], &[0, 1]).unwrap();
        assert_eq!(micro, 0.5);
        // class 0: tp 2, fp 2 -> F1 = 4/6
        assert!((macro_ - (2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(f1_scores(&[2, 2], &[2, 2], &[2]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn logistic_separable_and_penalized() {
        let x = Matrix::from_vec(6, 1, vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [false, false, false, true, true, true];
        let (model, trace) = train_logistic_traced(&x, &y, LogisticOptions::default()).unwrap();
        for r in 0..6 {
            assert_eq!(model.probability(x.row(r)) > 0.5, y[r]);
        }
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));

        let y = [false, false, true, true, true, true];
        let heavy = train_logistic(
            &x,
            &y,
            LogisticOptions {
                penalty: 1e6,
                epochs: 500,
            },
        )
        .unwrap();
        assert!(heavy.weights()[0].abs() < 1e-5);
        assert!((heavy.probability(&[0.0]) - 4.0 / 6.0).abs() < 1e-4);
        assert!(train_logistic(&x, &[true; 6], LogisticOptions::default()).is_err());
    }

    #[test]
    fn one_vs_rest_on_separated_clouds() {
        let centres = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &(a, b)) in centres.iter().enumerate() {
            for k in 0..5 {
                let jitter = k as f64 * 0.1;
                rows.push(vec![a + jitter, b - jitter]);
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let clf = one_vs_rest(&x, &labels, 3, LogisticOptions::default()).unwrap();
        for (r, &l) in labels.iter().enumerate() {
            assert_eq!(clf.predict(x.row(r)), l);
        }
        assert!(one_vs_rest(&x, &[0; 15], 3, LogisticOptions::default()).is_err());
    }

    #[test]
    fn ratio_parsing() {
        let r = parse_ratios("0.1..0.9 step 0.1").unwrap();
        assert_eq!(r, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(parse_ratios("0.5, 0.7").unwrap(), vec![0.5, 0.7]);
        assert!(parse_ratios("0.5..1.0 step 0.25").is_err());
        assert!(parse_ratios("x").is_err());
    }

    #[test]
    fn metrics_json_keys() {
        let report = MetricsReport::default()
            .with_link(&LinkReport {
                auc: 0.75,
                roc: vec![(0.0, 0.0), (1.0, 1.0)],
            })
            .with_classification(&[RatioScore {
                ratio: 0.5,
                micro: 1.0,
                macro_: 0.5,
            }]);
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["auc", "roc", "micro_f1", "macro_f1", "per_ratio", "config_echo"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["per_ratio"]["0.5"]["macro"], 0.5);
        assert_eq!(v["roc"][1][0], 1.0);
    }

    #[test]
    fn label_files() {
        assert_eq!(read_labels("1 0\n0 1\n# c\n").unwrap(), vec![1, 0]);
        assert_eq!(read_labels(&write_labels(&[2, 0, 1])).unwrap(), vec![2, 0, 1]);
        assert!(read_labels("0 1\n2 1\n").is_err());
        assert!(read_labels("0 1\n0 1\n").is_err());
        assert!(read_labels("0\n").is_err());
        assert!(read_labels("").is_err());
    }
}
