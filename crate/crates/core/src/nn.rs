//! Small dense feed-forward networks with hand-written reverse mode.
//!
//! Every network in the model is a chain of affine layers with an
//! elementwise activation. Batches are matrices with one example per row.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::textfmt::sig9;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Largest `in × out` weight block accepted from a checkpoint.
const MAX_LAYER_PARAMS: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`.
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Dense>,
    id: u64,
    /// Bumped on every parameter change; caches from older versions are stale.
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Intermediates kept by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    version: u64,
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Parameter-shaped buffer: gradients, optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Matrix, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.in_dim(), l.out_dim()), vec![0.0; l.out_dim()]))
                .collect(),
        }
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.layers[layer].0
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.layers[layer].1
    }

    /// Flattened in checkpoint order: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.scale(factor);
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_scaled(ow, factor);
            for (x, y) in b.iter_mut().zip(ob) {
                *x += factor * y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.as_slice().iter().all(|&v| v == 0.0) && b.iter().all(|&v| v == 0.0))
    }

    /// First non-finite block, named `layer <l> weight|bias`.
    fn first_non_finite(&self) -> Option<String> {
        for (l, (w, b)) in self.layers.iter().enumerate() {
            if !w.is_finite() {
                return Some(format!("layer {l} weight"));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Some(format!("layer {l} bias"));
            }
        }
        None
    }
}

/// Glorot-uniform weights, zero biases. `dims` lists layer widths from input
/// to output; `activations` has one entry per layer.
pub fn init_net(dims: &[usize], activations: &[Activation], seed: u64) -> Result<DenseNet> {
    if dims.len() < 2 {
        return Err(Error::invalid("a network needs at least one layer"));
    }
    if activations.len() != dims.len() - 1 {
        return Err(Error::invalid(format!(
            "{} activations for {} layers",
            activations.len(),
            dims.len() - 1
        )));
    }
    if let Some(bad) = dims.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("layer width {bad} is zero")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .zip(activations)
        .map(|(pair, &activation)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Dense {
                weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                bias: vec![0.0; fan_out],
                activation,
            }
        })
        .collect();
    Ok(DenseNet::from_layers(layers))
}

impl DenseNet {
    fn from_layers(layers: Vec<Dense>) -> Self {
        DenseNet {
            layers,
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(Dense::out_dim));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * l.weight.cols() + l.bias.len()).sum()
    }

    /// Parameters in checkpoint order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut rest = values;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weight.as_slice().len());
            l.weight.as_mut_slice().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        self.version += 1;
        Ok(())
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.bias.iter().fold(l.weight.max_abs(), |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
    }

    /// Output only.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer_forward(layer, &x)?;
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Matrix) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer_forward(layer, activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(ForwardCache {
            net_id: self.id,
            version: self.version,
            activations,
        })
    }

    /// Reverse pass for `d loss / d output = output_grad`. Returns parameter
    /// gradients and `d loss / d input`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.net_id != self.id || cache.version != self.version {
            return Err(Error::invalid("forward cache is stale or belongs to another network"));
        }
        if output_grad.shape() != cache.output().shape() {
            return Err(Error::Dimension(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.shape(),
                cache.output().shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let output = &cache.activations[l + 1];
            let input = &cache.activations[l];
            let mut pre = upstream;
            for (g, &y) in pre.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *g *= layer.activation.derivative_from_output(y);
            }
            let weight_grad = input.t_matmul(&pre)?;
            let mut bias_grad = vec![0.0; layer.out_dim()];
            for r in 0..pre.rows() {
                for (b, g) in bias_grad.iter_mut().zip(pre.row(r)) {
                    *b += g;
                }
            }
            upstream = pre.matmul_t(&layer.weight)?;
            grads.push((weight_grad, bias_grad));
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(-c, c));
            l.bias.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
        self.version += 1;
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    fn for_each_param(&mut self, other: &Gradients, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut k = 0;
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&other.layers) {
            for (p, &g) in layer.weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                f(k, p, g);
                k += 1;
            }
            for (p, &g) in layer.bias.iter_mut().zip(gb) {
                f(k, p, g);
                k += 1;
            }
        }
        self.version += 1;
    }
}

fn layer_forward(layer: &Dense, x: &Matrix) -> Result<Matrix> {
    let mut y = x.matmul(&layer.weight)?;
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(&layer.bias) {
            *v = layer.activation.apply(*v + b);
        }
    }
    Ok(y)
}

/// Free-function form of [`DenseNet::clip`].
pub fn clip_params(net: &mut DenseNet, c: f64) {
    net.clip(c);
}

fn check_grads(net: &DenseNet, grads: &Gradients) -> Result<()> {
    let shapes_match = net.layers.len() == grads.layers.len()
        && net
            .layers
            .iter()
            .zip(&grads.layers)
            .all(|(l, (w, b))| l.weight.shape() == w.shape() && l.bias.len() == b.len());
    if !shapes_match {
        return Err(Error::Dimension("gradient shapes do not match the network".into()));
    }
    if let Some(block) = grads.first_non_finite() {
        return Err(Error::Numeric(format!("non-finite gradient in {block}")));
    }
    Ok(())
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(net: &DenseNet, step_size: f64) -> Self {
        Adam {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            first: vec![0.0; net.num_params()],
            second: vec![0.0; net.num_params()],
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Descends along `grads`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        check_grads(net, grads)?;
        if self.first.len() != net.num_params() {
            return Err(Error::Dimension("optimizer state does not match the network".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        let (lr, eps) = (self.step_size, self.eps);
        let (first, second) = (&mut self.first, &mut self.second);
        net.for_each_param(grads, |k, p, g| {
            first[k] = b1 * first[k] + (1.0 - b1) * g;
            second[k] = b2 * second[k] + (1.0 - b2) * g * g;
            let m_hat = first[k] / correction1;
            let v_hat = second[k] / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub step_size: f64,
}

impl Sgd {
    pub fn step(&self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        check_grads(net, grads)?;
        let lr = self.step_size;
        net.for_each_param(grads, |_, p, g| *p -= lr * g);
        Ok(())
    }
}

/// Checkpoint text: a `#dense-net layers=<L>` header, one `layer <in> <out>
/// <activation>` line per layer, then every parameter on its own line.
pub fn write_net(net: &DenseNet) -> String {
    let mut out = format!("#dense-net layers={}\n", net.layers.len());
    for l in &net.layers {
        out.push_str(&format!("layer {} {} {}\n", l.in_dim(), l.out_dim(), l.activation));
    }
    for v in net.params_flat() {
        out.push_str(&sig9(v));
        out.push('\n');
    }
    out
}

pub fn read_net(text: &str) -> Result<DenseNet> {
    const WHAT: &str = "network checkpoint";
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let layer_count = lines
        .next()
        .and_then(|(_, l)| l.strip_prefix("#dense-net layers="))
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| (1..=64).contains(&n))
        .ok_or_else(|| Error::parse(WHAT, 1, "expected \"#dense-net layers=<L>\" header"))?;

    let mut specs = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, 0, "truncated layer list"))?;
        let toks: Vec<&str> = line.split_ascii_whitespace().collect();
        let spec = match toks.as_slice() {
            ["layer", i, o, a] => i
                .parse::<usize>()
                .ok()
                .zip(o.parse::<usize>().ok())
                .zip(a.parse::<Activation>().ok()),
            _ => None,
        };
        let Some(((fan_in, fan_out), activation)) = spec else {
            return Err(Error::parse(WHAT, line_no, "expected \"layer <in> <out> <activation>\""));
        };
        if fan_in == 0 || fan_out == 0 || fan_in.saturating_mul(fan_out) > MAX_LAYER_PARAMS {
            return Err(Error::parse(WHAT, line_no, "layer dimensions out of range"));
        }
        if let Some(&(_, prev_out, _)) = specs.last() {
            if prev_out != fan_in {
                return Err(Error::parse(WHAT, line_no, format!("layer input {fan_in} does not follow {prev_out}")));
            }
        }
        specs.push((fan_in, fan_out, activation));
    }

    let mut layers = Vec::with_capacity(layer_count);
    let mut last_line = 0;
    for (fan_in, fan_out, activation) in specs {
        let mut take = |count: usize| -> Result<Vec<f64>> {
            let mut values = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let (line_no, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(WHAT, 0, "too few parameters"))?;
                last_line = line_no;
                let v = line
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(WHAT, line_no, format!("bad parameter {line:?}")))?;
                values.push(v);
            }
            Ok(values)
        };
        let weight = Matrix::from_vec(fan_in, fan_out, take(fan_in * fan_out)?)?;
        let bias = take(fan_out)?;
        layers.push(Dense { weight, bias, activation });
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::parse(WHAT, line_no, format!("unexpected data after parameters (last at line {last_line})")));
    }
    Ok(DenseNet::from_layers(layers))
}

pub fn read_net_file(path: &Path) -> Result<DenseNet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_net(&text)
}
