//! Adversarially regularized auto-encoder over latent transmission features.
//!
//! Four dense networks: an encoder `f` from feature rows to embeddings, a
//! decoder `g` back to feature rows, a generator `G` from noise to the
//! embedding space and a clipped critic `D` comparing encoder and generator
//! outputs.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{init_net, read_net, write_net, Activation, Adam, DenseNet, Gradients, Sgd};
use crate::textfmt::{data_lines, sig9};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub noise_dim: usize,
    pub lambda_local: f64,
    pub lambda_adv: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub critic_steps: usize,
    pub encoder_hidden: usize,
    pub generator_hidden: usize,
    pub critic_hidden: usize,
    pub ae_step: f64,
    pub generator_step: f64,
    pub critic_step: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 64,
            noise_dim: 64,
            lambda_local: 0.05,
            lambda_adv: 0.5,
            clip: 0.01,
            batch_size: 64,
            iterations: 2000,
            critic_steps: 5,
            encoder_hidden: 256,
            generator_hidden: 64,
            critic_hidden: 64,
            ae_step: 1e-3,
            generator_step: 1e-3,
            critic_step: 5e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("noise_dim", self.noise_dim),
            ("batch_size", self.batch_size),
            ("encoder_hidden", self.encoder_hidden),
            ("generator_hidden", self.generator_hidden),
            ("critic_hidden", self.critic_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.batch_size > num_nodes {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds the {num_nodes} nodes",
                self.batch_size
            )));
        }
        for (name, v) in [("lambda_local", self.lambda_local), ("lambda_adv", self.lambda_adv)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        for (name, v) in [
            ("clip", self.clip),
            ("ae_step", self.ae_step),
            ("generator_step", self.generator_step),
            ("critic_step", self.critic_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaaeModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub generator: DenseNet,
    pub discriminator: DenseNet,
}

impl LaaeModel {
    /// Fresh model for `num_nodes`-wide feature rows. The critic starts
    /// inside the clipping box.
    pub fn new(num_nodes: usize, cfg: &TrainConfig) -> Result<Self> {
        use Activation::{Identity, Relu, Sigmoid};
        let d = cfg.embed_dim;
        let seed = cfg.seed;
        let mut discriminator = init_net(&[d, cfg.critic_hidden, 1], &[Relu, Identity], seed.wrapping_add(3))?;
        discriminator.clip(cfg.clip);
        Ok(LaaeModel {
            encoder: init_net(&[num_nodes, cfg.encoder_hidden, d], &[Relu, Identity], seed)?,
            decoder: init_net(&[d, cfg.encoder_hidden, num_nodes], &[Relu, Sigmoid], seed.wrapping_add(1))?,
            generator: init_net(&[cfg.noise_dim, cfg.generator_hidden, d], &[Relu, Identity], seed.wrapping_add(2))?,
            discriminator,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.in_dim()
    }

    fn check(&self) -> Result<()> {
        let n = self.encoder.in_dim();
        let d = self.encoder.out_dim();
        let ok = self.decoder.in_dim() == d
            && self.decoder.out_dim() == n
            && self.generator.out_dim() == d
            && self.discriminator.in_dim() == d
            && self.discriminator.out_dim() == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("networks do not chain".into()))
        }
    }
}

/// `Σ ‖x − g(f(x))‖²` over the batch, with encoder and decoder gradients.
pub fn loss_global(model: &LaaeModel, x: &Matrix) -> Result<(f64, Gradients, Gradients)> {
    let enc = model.encoder.forward(x)?;
    let dec = model.decoder.forward(enc.output())?;
    let (loss, grad) = reconstruction(x, dec.output());
    let (dec_grads, dy) = model.decoder.backward(&dec, &grad)?;
    let (enc_grads, _) = model.encoder.backward(&enc, &dy)?;
    Ok((loss, enc_grads, dec_grads))
}

/// `Σ_{i<j} w_ij ‖f(x_i) − f(x_j)‖²` with `weights` the batch block of the
/// symmetric weight matrix; returns the encoder gradient.
pub fn loss_local(model: &LaaeModel, x: &Matrix, weights: &Matrix) -> Result<(f64, Gradients)> {
    let enc = model.encoder.forward(x)?;
    let (loss, dy) = local_term(enc.output(), weights)?;
    let (grads, _) = model.encoder.backward(&enc, &dy)?;
    Ok((loss, grads))
}

/// `E[D(f(x))]`, the adversarial part of the encoder objective.
pub fn critic_on_embeddings(model: &LaaeModel, x: &Matrix) -> Result<(f64, Gradients)> {
    let enc = model.encoder.forward(x)?;
    let (value, dy) = mean_critic_input_grad(&model.discriminator, enc.output(), 1.0)?;
    let (grads, _) = model.encoder.backward(&enc, &dy)?;
    Ok((value, grads))
}

/// `−E[D(f(x))] + E[D(G(z))]` with the critic gradient.
pub fn loss_discriminator(model: &LaaeModel, x: &Matrix, z: &Matrix) -> Result<(f64, Gradients)> {
    let real = model.encoder.predict(x)?;
    let fake = model.generator.predict(z)?;
    critic_loss(&model.discriminator, &real, &fake)
}

/// `E[D(f(x))] − E[D(G(z))]` with the generator gradient.
pub fn loss_generator(model: &LaaeModel, x: &Matrix, z: &Matrix) -> Result<(f64, Gradients)> {
    let real = model.encoder.predict(x)?;
    generator_loss(model, &real, z)
}

fn reconstruction(x: &Matrix, recon: &Matrix) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut loss = 0.0;
    for ((g, &r), &t) in grad.as_mut_slice().iter_mut().zip(recon.as_slice()).zip(x.as_slice()) {
        let diff = r - t;
        loss += diff * diff;
        *g = 2.0 * diff;
    }
    (loss, grad)
}

fn local_term(y: &Matrix, weights: &Matrix) -> Result<(f64, Matrix)> {
    let b = y.rows();
    if weights.shape() != (b, b) {
        return Err(Error::Dimension(format!(
            "local weights {:?} for a batch of {b}",
            weights.shape()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(b, y.cols());
    for i in 0..b {
        for j in (i + 1)..b {
            let w = weights[(i, j)];
            if w == 0.0 {
                continue;
            }
            let mut dist = 0.0;
            for (k, (a, c)) in y.row(i).iter().zip(y.row(j)).enumerate() {
                let diff = a - c;
                dist += diff * diff;
                grad.row_mut(i)[k] += 2.0 * w * diff;
                grad.row_mut(j)[k] -= 2.0 * w * diff;
            }
            loss += w * dist;
        }
    }
    Ok((loss, grad))
}

/// Mean critic output over `input` rows and `factor · ∂mean/∂input`.
fn mean_critic_input_grad(critic: &DenseNet, input: &Matrix, factor: f64) -> Result<(f64, Matrix)> {
    let cache = critic.forward(input)?;
    let rows = input.rows() as f64;
    let value = cache.output().as_slice().iter().sum::<f64>() / rows;
    let (_, dy) = critic.backward(&cache, &Matrix::filled(input.rows(), 1, factor / rows))?;
    Ok((value, dy))
}

fn critic_loss(critic: &DenseNet, real: &Matrix, fake: &Matrix) -> Result<(f64, Gradients)> {
    let real_cache = critic.forward(real)?;
    let fake_cache = critic.forward(fake)?;
    let (m_real, m_fake) = (real.rows() as f64, fake.rows() as f64);
    let mean_real = real_cache.output().as_slice().iter().sum::<f64>() / m_real;
    let mean_fake = fake_cache.output().as_slice().iter().sum::<f64>() / m_fake;
    let (mut grads, _) = critic.backward(&real_cache, &Matrix::filled(real.rows(), 1, -1.0 / m_real))?;
    let (fake_grads, _) = critic.backward(&fake_cache, &Matrix::filled(fake.rows(), 1, 1.0 / m_fake))?;
    grads.add_scaled(&fake_grads, 1.0);
    Ok((mean_fake - mean_real, grads))
}

fn generator_loss(model: &LaaeModel, real: &Matrix, z: &Matrix) -> Result<(f64, Gradients)> {
    let critic = &model.discriminator;
    let real_out = critic.predict(real)?;
    let mean_real = real_out.as_slice().iter().sum::<f64>() / real.rows() as f64;
    let gen = model.generator.forward(z)?;
    let (mean_fake, dfake) = mean_critic_input_grad(critic, gen.output(), -1.0)?;
    let (grads, _) = model.generator.backward(&gen, &dfake)?;
    Ok((mean_real - mean_fake, grads))
}

/// Losses measured during one training iteration, before that iteration's
/// updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub global: f64,
    pub local: f64,
    pub discriminator: f64,
    pub generator: f64,
}

pub enum TrainEvent<'a> {
    /// After each critic update and its clipping.
    CriticStep { iteration: usize, model: &'a LaaeModel },
    IterationEnd { row: &'a HistoryRow, model: &'a LaaeModel },
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: LaaeModel,
    pub embeddings: Matrix,
    pub history: Vec<HistoryRow>,
}

pub fn train(x: &Matrix, weights: &Matrix, cfg: &TrainConfig) -> Result<Trained> {
    train_with_observer(x, weights, cfg, |_| {})
}

pub fn train_with_observer(
    x: &Matrix,
    weights: &Matrix,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&TrainEvent<'_>),
) -> Result<Trained> {
    let n = x.rows();
    if x.cols() != n || weights.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "features {:?} and weights {:?} must both be {n}x{n}",
            x.shape(),
            weights.shape()
        )));
    }
    if !x.is_finite() || !weights.is_finite() {
        return Err(Error::Numeric("non-finite training input".into()));
    }
    cfg.validate(n)?;

    let mut model = LaaeModel::new(n, cfg)?;
    let mut encoder_opt = Adam::new(&model.encoder, cfg.ae_step);
    let mut decoder_opt = Adam::new(&model.decoder, cfg.ae_step);
    let mut generator_opt = Adam::new(&model.generator, cfg.generator_step);
    let critic_opt = Sgd {
        step_size: cfg.critic_step,
    };
    let adversarial = cfg.lambda_adv > 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut history = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let mut batch = index::sample(&mut rng, n, cfg.batch_size).into_vec();
        batch.sort_unstable();
        let xb = x.select_rows(&batch);
        let wb = sub_block(weights, &batch);

        let enc = model.encoder.forward(&xb)?;
        let dec = model.decoder.forward(enc.output())?;
        let (global, recon_grad) = reconstruction(&xb, dec.output());
        ensure_finite(iteration, "L_glo", global)?;
        let (local, local_dy) = local_term(enc.output(), &wb)?;
        ensure_finite(iteration, "L_loc", local)?;

        let (dec_grads, mut dy) = model.decoder.backward(&dec, &recon_grad)?;
        dy.add_scaled(&local_dy, cfg.lambda_local);
        if adversarial {
            let (_, adv_dy) = mean_critic_input_grad(&model.discriminator, enc.output(), cfg.lambda_adv)?;
            dy.add_scaled(&adv_dy, 1.0);
        }
        let (enc_grads, _) = model.encoder.backward(&enc, &dy)?;
        encoder_opt.step(&mut model.encoder, &enc_grads).map_err(at_iteration(iteration))?;
        decoder_opt.step(&mut model.decoder, &dec_grads).map_err(at_iteration(iteration))?;

        let (mut l_d, mut l_g) = (0.0, 0.0);
        if adversarial {
            let real = model.encoder.predict(&xb)?;
            for _ in 0..cfg.critic_steps {
                let z = sample_noise(&mut rng, cfg.batch_size, cfg.noise_dim);
                let fake = model.generator.predict(&z)?;
                let (loss, mut grads) = critic_loss(&model.discriminator, &real, &fake)?;
                ensure_finite(iteration, "L_D", loss)?;
                l_d = loss;
                grads.scale(cfg.lambda_adv);
                critic_opt.step(&mut model.discriminator, &grads).map_err(at_iteration(iteration))?;
                model.discriminator.clip(cfg.clip);
                observer(&TrainEvent::CriticStep {
                    iteration,
                    model: &model,
                });
            }
            let z = sample_noise(&mut rng, cfg.batch_size, cfg.noise_dim);
            let (loss, mut grads) = generator_loss(&model, &real, &z)?;
            ensure_finite(iteration, "L_G", loss)?;
            l_g = loss;
            grads.scale(cfg.lambda_adv);
            generator_opt.step(&mut model.generator, &grads).map_err(at_iteration(iteration))?;
        }

        let row = HistoryRow {
            iteration,
            global,
            local,
            discriminator: l_d,
            generator: l_g,
        };
        if iteration % 100 == 0 {
            log::debug!(
                "iter {iteration}: L_glo {global:.4} L_loc {local:.4} L_D {l_d:.3e} L_G {l_g:.3e}"
            );
        }
        observer(&TrainEvent::IterationEnd { row: &row, model: &model });
        history.push(row);
    }

    let embeddings = embed(&model, x)?;
    if !embeddings.is_finite() {
        return Err(Error::Numeric("embeddings are not finite".into()));
    }
    Ok(Trained {
        model,
        embeddings,
        history,
    })
}

pub fn embed(model: &LaaeModel, x: &Matrix) -> Result<Matrix> {
    model.check()?;
    model.encoder.predict(x)
}

fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(m) => Error::Numeric(format!("iteration {iteration}: {m}")),
        e => e,
    }
}

fn ensure_finite(iteration: usize, loss: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { iteration, loss })
    }
}

fn sample_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut *rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

fn sub_block(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), idx.len());
    for (a, &i) in idx.iter().enumerate() {
        let row = m.row(i);
        for (b, &j) in idx.iter().enumerate() {
            out.row_mut(a)[b] = row[j];
        }
    }
    out
}

const SECTIONS: [&str; 4] = ["encoder", "decoder", "generator", "discriminator"];

/// Four network checkpoints, each preceded by a `[name]` line.
pub fn write_model(model: &LaaeModel) -> String {
    let nets = [&model.encoder, &model.decoder, &model.generator, &model.discriminator];
    let mut out = String::new();
    for (name, net) in SECTIONS.iter().zip(nets) {
        out.push_str(&format!("[{name}]\n"));
        out.push_str(&write_net(net));
    }
    out
}

pub fn read_model(text: &str) -> Result<LaaeModel> {
    let mut bodies: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if SECTIONS.get(bodies.len()) != Some(&name) {
                return Err(Error::parse("model checkpoint", i + 1, format!("unexpected section [{name}]")));
            }
            bodies.push(String::new());
        } else if let Some(body) = bodies.last_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !trimmed.is_empty() {
            return Err(Error::parse("model checkpoint", i + 1, "data before the first section"));
        }
    }
    if bodies.len() != SECTIONS.len() {
        return Err(Error::parse("model checkpoint", 0, "expected four network sections"));
    }
    let model = LaaeModel {
        encoder: read_net(&bodies[0])?,
        decoder: read_net(&bodies[1])?,
        generator: read_net(&bodies[2])?,
        discriminator: read_net(&bodies[3])?,
    };
    model.check()?;
    Ok(model)
}

pub fn read_model_file(path: &Path) -> Result<LaaeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text)
}

/// `node v1 … vd` per line.
pub fn write_embeddings(y: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..y.rows() {
        out.push_str(&r.to_string());
        for &v in y.row(r) {
            out.push(' ');
            out.push_str(&sig9(v));
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`write_embeddings`]. Every node in `0..N` must appear once.
pub fn read_embeddings(text: &str) -> Result<Matrix> {
    const WHAT: &str = "embeddings";
    let mut rows: Vec<Option<Vec<f64>>> = Vec::new();
    let mut dim = None;
    for (line_no, line) in data_lines(text) {
        let mut toks = line.split_ascii_whitespace();
        let node: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .filter(|&v| v < crate::graph::MAX_NODES)
            .ok_or_else(|| Error::parse(WHAT, line_no, "expected a node id"))?;
        let values = toks
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::parse(WHAT, line_no, "bad embedding value"))?;
        if values.is_empty() || *dim.get_or_insert(values.len()) != values.len() {
            return Err(Error::parse(WHAT, line_no, "inconsistent embedding width"));
        }
        if node >= rows.len() {
            rows.resize(node + 1, None);
        }
        if rows[node].replace(values).is_some() {
            return Err(Error::parse(WHAT, line_no, format!("node {node} listed twice")));
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(WHAT, 0, "no embeddings"))?;
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (node, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| Error::parse(WHAT, 0, format!("node {node} missing")))?;
        data.extend(row);
    }
    Matrix::from_vec(data.len() / dim, dim, data)
}

pub fn read_embeddings_file(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(&text)
}

/// `iter L_glo L_loc L_D L_G` per line.
pub fn write_history(history: &[HistoryRow]) -> String {
    let mut out = String::new();
    for row in history {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            row.iteration,
            sig9(row.global),
            sig9(row.local),
            sig9(row.discriminator),
            sig9(row.generator)
        ));
    }
    out
}
