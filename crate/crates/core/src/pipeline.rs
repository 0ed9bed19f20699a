//! Stage wiring and the flat `key = value` configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffusion::{sample_cascades, CascadeSet};
use crate::error::{Error, Result};
use crate::eval::{
    node_classification_experiment, parse_ratios, run_link_prediction, EdgeOperator, LogisticOptions,
    MetricsReport,
};
use crate::graph::Graph;
use crate::inference::{
    closed_form_estimate, feature_matrix_scaled, mle_estimate, symmetric_weights_scaled, FeatureScaling,
    LikelihoodMode, MleOptions, TransmissionMatrix,
};
use crate::laae::{train, TrainConfig, Trained};
use crate::matrix::Matrix;
use crate::textfmt::sig9;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub directed: bool,
    pub out_dir: PathBuf,
    pub cascades: PathBuf,
    pub matrix: PathBuf,
    pub embeddings: PathBuf,
    pub history: PathBuf,
    pub model: PathBuf,
    pub metrics: PathBuf,

    pub window: f64,
    pub rate: f64,
    pub repetitions: usize,
    pub threshold: f64,
    pub likelihood: LikelihoodMode,
    pub refine_mle: bool,
    pub mle_steps: usize,
    pub mle_step_size: f64,
    pub scaling: FeatureScaling,
    /// `false` trains on the adjacency matrix instead of inferred rates.
    pub latent: bool,

    pub train: TrainConfig,
    /// `None` follows `train.embed_dim`.
    pub noise_dim: Option<usize>,

    pub operator: EdgeOperator,
    pub fraction: f64,
    pub ratios: Vec<f64>,
    pub ratios_text: String,
    pub runs: usize,
    pub penalty: f64,
    pub epochs: usize,

    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ratios_text = "0.1..0.9 step 0.1".to_string();
        PipelineConfig {
            edges: None,
            labels: None,
            directed: false,
            out_dir: PathBuf::from("out"),
            cascades: PathBuf::from("cascades.txt"),
            matrix: PathBuf::from("matrix.txt"),
            embeddings: PathBuf::from("embeddings.txt"),
            history: PathBuf::from("history.txt"),
            model: PathBuf::from("model.txt"),
            metrics: PathBuf::from("metrics.json"),
            window: 10.0,
            rate: 1.0,
            repetitions: 1,
            threshold: 0.0,
            likelihood: LikelihoodMode::PaperLiteral,
            refine_mle: false,
            mle_steps: MleOptions::default().steps,
            mle_step_size: MleOptions::default().step_size,
            scaling: FeatureScaling::Log,
            latent: true,
            train: TrainConfig::default(),
            noise_dim: None,
            operator: EdgeOperator::Hadamard,
            fraction: 0.5,
            ratios: parse_ratios(&ratios_text).expect("default ratios parse"),
            ratios_text,
            runs: 10,
            penalty: LogisticOptions::default().penalty,
            epochs: LogisticOptions::default().epochs,
            seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("bad value {value:?} for {key} (expected true or false)"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", i + 1, "expected \"key = value\""))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::parse("config", i + 1, msg),
                other => other,
            })?;
        }
        Ok(())
    }

    /// `key=value` as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "edges" => self.edges = optional_path(value),
            "labels" => self.labels = optional_path(value),
            "directed" => self.directed = parse_bool(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "cascades" => self.cascades = PathBuf::from(value),
            "matrix" => self.matrix = PathBuf::from(value),
            "embeddings" => self.embeddings = PathBuf::from(value),
            "history" => self.history = PathBuf::from(value),
            "model" => self.model = PathBuf::from(value),
            "metrics" => self.metrics = PathBuf::from(value),
            "window" => self.window = parse_value(key, value)?,
            "rate" => self.rate = parse_value(key, value)?,
            "repetitions" => self.repetitions = parse_value(key, value)?,
            "threshold" => self.threshold = parse_value(key, value)?,
            "likelihood" => self.likelihood = value.parse()?,
            "refine_mle" => self.refine_mle = parse_bool(key, value)?,
            "mle_steps" => self.mle_steps = parse_value(key, value)?,
            "mle_step_size" => self.mle_step_size = parse_value(key, value)?,
            "scaling" => self.scaling = value.parse()?,
            "latent" => self.latent = parse_bool(key, value)?,
            "embed_dim" => t.embed_dim = parse_value(key, value)?,
            "noise_dim" => {
                self.noise_dim = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "lambda_local" => t.lambda_local = parse_value(key, value)?,
            "lambda_adv" => t.lambda_adv = parse_value(key, value)?,
            "clip" => t.clip = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "iterations" => t.iterations = parse_value(key, value)?,
            "critic_steps" => t.critic_steps = parse_value(key, value)?,
            "encoder_hidden" => t.encoder_hidden = parse_value(key, value)?,
            "generator_hidden" => t.generator_hidden = parse_value(key, value)?,
            "critic_hidden" => t.critic_hidden = parse_value(key, value)?,
            "ae_step" => t.ae_step = parse_value(key, value)?,
            "generator_step" => t.generator_step = parse_value(key, value)?,
            "critic_step" => t.critic_step = parse_value(key, value)?,
            "operator" => self.operator = value.parse()?,
            "fraction" => self.fraction = parse_value(key, value)?,
            "ratios" => {
                self.ratios = parse_ratios(value)?;
                self.ratios_text = value.to_string();
            }
            "runs" => self.runs = parse_value(key, value)?,
            "penalty" => self.penalty = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let t = &self.train;
        vec![
            ("edges", path(&self.edges)),
            ("labels", path(&self.labels)),
            ("directed", self.directed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("cascades", self.cascades.display().to_string()),
            ("matrix", self.matrix.display().to_string()),
            ("embeddings", self.embeddings.display().to_string()),
            ("history", self.history.display().to_string()),
            ("model", self.model.display().to_string()),
            ("metrics", self.metrics.display().to_string()),
            ("window", sig9(self.window)),
            ("rate", sig9(self.rate)),
            ("repetitions", self.repetitions.to_string()),
            ("threshold", sig9(self.threshold)),
            ("likelihood", self.likelihood.to_string()),
            ("refine_mle", self.refine_mle.to_string()),
            ("mle_steps", self.mle_steps.to_string()),
            ("mle_step_size", sig9(self.mle_step_size)),
            ("scaling", self.scaling.to_string()),
            ("latent", self.latent.to_string()),
            ("embed_dim", t.embed_dim.to_string()),
            ("noise_dim", self.noise_dim.map_or("auto".to_string(), |d| d.to_string())),
            ("lambda_local", sig9(t.lambda_local)),
            ("lambda_adv", sig9(t.lambda_adv)),
            ("clip", sig9(t.clip)),
            ("batch_size", t.batch_size.to_string()),
            ("iterations", t.iterations.to_string()),
            ("critic_steps", t.critic_steps.to_string()),
            ("encoder_hidden", t.encoder_hidden.to_string()),
            ("generator_hidden", t.generator_hidden.to_string()),
            ("critic_hidden", t.critic_hidden.to_string()),
            ("ae_step", sig9(t.ae_step)),
            ("generator_step", sig9(t.generator_step)),
            ("critic_step", sig9(t.critic_step)),
            ("operator", self.operator.to_string()),
            ("fraction", sig9(self.fraction)),
            ("ratios", self.ratios_text.clone()),
            ("runs", self.runs.to_string()),
            ("penalty", sig9(self.penalty)),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Training settings with the seed and noise width resolved.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            noise_dim: self.noise_dim.unwrap_or(self.train.embed_dim),
            seed: stage_seed(self.seed, 3),
            ..self.train.clone()
        }
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            steps: self.mle_steps,
            step_size: self.mle_step_size,
            mode: self.likelihood,
        }
    }

    pub fn logistic_options(&self) -> LogisticOptions {
        LogisticOptions {
            penalty: self.penalty,
            epochs: self.epochs,
        }
    }

    /// Output paths are relative to `out_dir` unless absolute.
    pub fn output_path(&self, file: &Path) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::invalid(format!("window must be positive, got {}", self.window)));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!("rate must be positive, got {}", self.rate)));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::invalid(format!("threshold must be nonnegative, got {}", self.threshold)));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::invalid(format!("fraction {} not in (0, 1)", self.fraction)));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.train.embed_dim == 0 || self.noise_dim == Some(0) {
            return Err(Error::invalid("embedding and noise dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// Decorrelates the per-stage seeds derived from one user seed.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn sample_stage(cfg: &PipelineConfig, graph: &Graph) -> Result<CascadeSet> {
    sample_cascades(graph, cfg.rate, cfg.window, cfg.repetitions, stage_seed(cfg.seed, 1))
}

pub fn infer_stage(cfg: &PipelineConfig, cascades: &CascadeSet) -> Result<TransmissionMatrix> {
    let w = closed_form_estimate(cascades, cfg.threshold);
    if w.nonzero_count() == 0 {
        log::warn!("inferred matrix is empty (threshold {})", cfg.threshold);
    }
    if !cfg.refine_mle || w.nonzero_count() == 0 {
        return Ok(w);
    }
    let outcome = mle_estimate(cascades, &w, cfg.mle_options())?;
    log::info!(
        "mle refinement: objective {} -> {} in {} steps",
        outcome.initial_objective,
        outcome.objective,
        outcome.accepted_steps
    );
    Ok(outcome.matrix)
}

/// Auto-encoder input and pair weights: scaled inferred rates, or the
/// adjacency matrix when `latent` is off.
pub fn training_inputs(cfg: &PipelineConfig, graph: &Graph, w: Option<&TransmissionMatrix>) -> Result<(Matrix, Matrix)> {
    match w {
        Some(w) if cfg.latent => Ok((feature_matrix_scaled(w, cfg.scaling), symmetric_weights_scaled(w, cfg.scaling))),
        Some(_) => Err(Error::invalid("inferred matrix given with latent = false")),
        None => {
            let a = graph.adjacency_matrix();
            let mut sym = a.clone();
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    sym[(i, j)] = a[(i, j)].max(a[(j, i)]);
                }
            }
            Ok((a, sym))
        }
    }
}

/// Intermediate artifacts of one embedding run.
#[derive(Debug, Clone)]
pub struct EmbedRun {
    pub cascades: Option<CascadeSet>,
    pub matrix: Option<TransmissionMatrix>,
    pub trained: Trained,
}

/// Sampling, inference (both skipped without latent ties) and training.
pub fn embed_stage(cfg: &PipelineConfig, graph: &Graph) -> Result<EmbedRun> {
    cfg.validate()?;
    let (cascades, matrix) = if cfg.latent {
        let set = sample_stage(cfg, graph)?;
        let w = infer_stage(cfg, &set)?;
        (Some(set), Some(w))
    } else {
        (None, None)
    };
    let (x, weights) = training_inputs(cfg, graph, matrix.as_ref())?;
    let trained = train(&x, &weights, &cfg.train_config())?;
    Ok(EmbedRun {
        cascades,
        matrix,
        trained,
    })
}

pub fn embed_graph(cfg: &PipelineConfig, graph: &Graph) -> Result<Matrix> {
    Ok(embed_stage(cfg, graph)?.trained.embeddings)
}

/// Standard-normal embeddings, the null model for link prediction.
pub fn random_embeddings(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(n, d, data).expect("sized above")
}

/// Link prediction on a held-out split of `graph` and, when labels are
/// given, node classification on embeddings of the full graph.
pub fn run_pipeline(cfg: &PipelineConfig, graph: &Graph, labels: Option<&[usize]>) -> Result<MetricsReport> {
    run_pipeline_with(cfg, graph, labels, |g| embed_graph(cfg, g))
}

pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    graph: &Graph,
    labels: Option<&[usize]>,
    embedder: impl Fn(&Graph) -> Result<Matrix>,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let link = run_link_prediction(
        graph,
        cfg.fraction,
        cfg.operator,
        cfg.logistic_options(),
        stage_seed(cfg.seed, 5),
        &embedder,
    )?;
    let mut report = MetricsReport::default().with_link(&link);
    if let Some(labels) = labels {
        if labels.len() != graph.num_nodes() {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.num_nodes()
            )));
        }
        let y = embedder(graph)?;
        let scores = node_classification_experiment(
            &y,
            labels,
            &cfg.ratios,
            cfg.runs,
            cfg.logistic_options(),
            stage_seed(cfg.seed, 6),
        )?;
        report = report.with_classification(&scores);
    }
    report.config_echo = cfg.echo();
    Ok(report)
}
