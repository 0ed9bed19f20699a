use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use latentmesh::diffusion::{read_cascades_file, write_cascades};
use latentmesh::eval::{
    node_classification_experiment, read_labels_file, run_link_prediction, write_labels, MetricsReport,
};
use latentmesh::graph::generators::stochastic_block_model;
use latentmesh::graph::read_edge_list;
use latentmesh::inference::{read_matrix_file, write_matrix};
use latentmesh::laae::{read_embeddings_file, train, write_embeddings, write_history, write_model};
use latentmesh::pipeline::{
    embed_graph, embed_stage, infer_stage, random_embeddings, sample_stage, stage_seed, training_inputs,
    PipelineConfig,
};
use latentmesh::{Error, Graph};

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Train on the adjacency matrix; skips sampling and inference
    #[arg(long, global = true)]
    no_latent: bool,

    /// Drop the adversarial term
    #[arg(long, global = true)]
    no_adversarial: bool,

    /// Refine the closed-form matrix by likelihood ascent
    #[arg(long, global = true)]
    refine_mle: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate diffusion cascades over the edge list
    Sample,
    /// Estimate the transmission matrix from sampled cascades
    Infer,
    /// Train the auto-encoder and write embeddings
    Embed,
    /// Link prediction on a held-out edge split
    EvalLink {
        /// Score standard-normal embeddings instead
        #[arg(long)]
        random: bool,
    },
    /// Node classification from stored embeddings
    EvalClass,
    /// Every stage end to end
    Pipeline,
    /// Pipeline metrics across embedding dimensions
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
        dims: Vec<usize>,
    },
    /// Full model against its reduced variants
    Ablate,
    /// Print the resolved configuration
    PrintConfig,
    /// Write a block-model edge list and labels
    GenSbm {
        #[arg(long, value_delimiter = ',', default_value = "50,50")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.25)]
        p_in: f64,
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        edges_out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
    },
}

#[derive(Parser, Debug)]
#[command(name = "latentmesh", version, about = "Latent network embedding pipeline")]
struct Full {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io { .. }) => 2,
        Some(Error::Parse { what, .. }) if *what != "config" => 2,
        Some(e) if e.is_numeric() => 3,
        Some(_) => 1,
        None if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Full::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let threads = match std::env::var("LATENTMESH_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("LATENTMESH_THREADS={v:?} is not a count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn resolve_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if common.no_latent {
        cfg.latent = false;
    }
    if common.no_adversarial {
        cfg.train.lambda_adv = 0.0;
    }
    if common.refine_mle {
        cfg.refine_mle = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_graph(cfg: &PipelineConfig) -> Result<Graph> {
    let Some(path) = &cfg.edges else {
        return Err(Error::InvalidInput("no edge list configured (set edges = <path>)".into()).into());
    };
    let (graph, report) = read_edge_list(path, cfg.directed)?;
    log::info!(
        "{}: {} nodes, {} edges ({} self-loops, {} duplicates dropped)",
        path.display(),
        graph.num_nodes(),
        graph.num_edges(),
        report.self_loops,
        report.duplicates
    );
    Ok(graph)
}

fn load_labels(cfg: &PipelineConfig) -> Result<Vec<usize>> {
    let Some(path) = &cfg.labels else {
        return Err(Error::InvalidInput("no label file configured (set labels = <path>)".into()).into());
    };
    Ok(read_labels_file(path)?)
}

fn write_out(cfg: &PipelineConfig, file: &Path, contents: &str) -> Result<PathBuf> {
    let path = cfg.output_path(file);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Every run leaves its resolved config next to its outputs.
fn echo_config(cfg: &PipelineConfig) -> Result<()> {
    write_out(cfg, Path::new("resolved.cfg"), &cfg.render())?;
    Ok(())
}

fn run(cli: Full) -> Result<()> {
    configure_threads()?;
    let cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::PrintConfig => print!("{}", cfg.render()),
        Command::Sample => {
            echo_config(&cfg)?;
            let graph = load_graph(&cfg)?;
            let set = sample_stage(&cfg, &graph)?;
            let path = write_out(&cfg, &cfg.cascades, &write_cascades(&set))?;
            println!("K = {}", set.len());
            println!("mean cascade size = {}", set.mean_size());
            println!("wrote {}", path.display());
        }
        Command::Infer => {
            echo_config(&cfg)?;
            let set = read_cascades_file(&cfg.output_path(&cfg.cascades))?;
            let w = infer_stage(&cfg, &set)?;
            let path = write_out(&cfg, &cfg.matrix, &write_matrix(&w))?;
            println!("nonzero entries = {}", w.nonzero_count());
            if cfg.edges.is_some() {
                let graph = load_graph(&cfg)?;
                if graph.num_nodes() != w.num_nodes() {
                    bail!(Error::Dimension(format!(
                        "edge list has {} nodes, cascades {}",
                        graph.num_nodes(),
                        w.num_nodes()
                    )));
                }
                println!("latent ties = {}", w.latent_tie_count(&graph));
            }
            println!("wrote {}", path.display());
        }
        Command::Embed => {
            echo_config(&cfg)?;
            let (x, weights) = if cfg.latent {
                let w = read_matrix_file(&cfg.output_path(&cfg.matrix))?;
                let graph = Graph::from_edges(w.num_nodes(), cfg.directed, std::iter::empty())?.0;
                training_inputs(&cfg, &graph, Some(&w))?
            } else {
                training_inputs(&cfg, &load_graph(&cfg)?, None)?
            };
            let trained = train(&x, &weights, &cfg.train_config())?;
            write_out(&cfg, &cfg.history, &write_history(&trained.history))?;
            write_out(&cfg, &cfg.model, &write_model(&trained.model))?;
            let path = write_out(&cfg, &cfg.embeddings, &write_embeddings(&trained.embeddings))?;
            if let Some(last) = trained.history.last() {
                println!(
                    "final losses: L_glo {} L_loc {} L_D {} L_G {}",
                    last.global, last.local, last.discriminator, last.generator
                );
            }
            println!("wrote {}", path.display());
        }
        Command::EvalLink { random } => {
            let graph = load_graph(&cfg)?;
            let d = cfg.train.embed_dim;
            let link = run_link_prediction(
                &graph,
                cfg.fraction,
                cfg.operator,
                cfg.logistic_options(),
                stage_seed(cfg.seed, 5),
                |g| {
                    if random {
                        Ok(random_embeddings(g.num_nodes(), d, stage_seed(cfg.seed, 7)))
                    } else {
                        embed_graph(&cfg, g)
                    }
                },
            )?;
            let mut report = MetricsReport::default().with_link(&link);
            report.config_echo = cfg.echo();
            let path = write_out(&cfg, &cfg.metrics, &report.to_json())?;
            println!("auc = {}", link.auc);
            println!("wrote {}", path.display());
        }
        Command::EvalClass => {
            let y = read_embeddings_file(&cfg.output_path(&cfg.embeddings))?;
            let labels = load_labels(&cfg)?;
            let scores = node_classification_experiment(
                &y,
                &labels,
                &cfg.ratios,
                cfg.runs,
                cfg.logistic_options(),
                stage_seed(cfg.seed, 6),
            )?;
            let mut report = MetricsReport::default().with_classification(&scores);
            report.config_echo = cfg.echo();
            let path = write_out(&cfg, &cfg.metrics, &report.to_json())?;
            for s in &scores {
                println!("ratio {}: micro {} macro {}", s.ratio, s.micro, s.macro_);
            }
            println!("wrote {}", path.display());
        }
        Command::Pipeline => {
            echo_config(&cfg)?;
            let report = pipeline(&cfg, true)?;
            let path = write_out(&cfg, &cfg.metrics, &report.to_json())?;
            print_summary(&report);
            println!("wrote {}", path.display());
        }
        Command::Sweep { dims } => {
            echo_config(&cfg)?;
            let mut per_dim = BTreeMap::new();
            for d in dims {
                let mut run_cfg = cfg.clone();
                run_cfg.train.embed_dim = d;
                run_cfg.validate()?;
                log::info!("sweep: d = {d}");
                let report = pipeline(&run_cfg, false)?;
                print!("d = {d}: ");
                print_summary(&report);
                per_dim.insert(d.to_string(), report);
            }
            let out = Grouped {
                per_dim: Some(per_dim),
                variants: None,
                config_echo: cfg.echo(),
            };
            let path = write_out(&cfg, &cfg.metrics, &to_json(&out))?;
            println!("wrote {}", path.display());
        }
        Command::Ablate => {
            echo_config(&cfg)?;
            let mut variants = BTreeMap::new();
            let mut no_latent = cfg.clone();
            no_latent.latent = false;
            let mut no_adversarial = cfg.clone();
            no_adversarial.train.lambda_adv = 0.0;
            for (name, run_cfg) in [("full", cfg.clone()), ("no_latent", no_latent), ("no_adversarial", no_adversarial)] {
                log::info!("ablate: {name}");
                let report = pipeline(&run_cfg, false)?;
                print!("{name}: ");
                print_summary(&report);
                variants.insert(name.to_string(), report);
            }
            let out = Grouped {
                per_dim: None,
                variants: Some(variants),
                config_echo: cfg.echo(),
            };
            let path = write_out(&cfg, &cfg.metrics, &to_json(&out))?;
            println!("wrote {}", path.display());
        }
        Command::GenSbm {
            blocks,
            p_in,
            p_out,
            seed,
            edges_out,
            labels_out,
        } => {
            let (graph, labels) = stochastic_block_model(&blocks, p_in, p_out, false, seed)?;
            for (path, text) in [(&edges_out, graph.to_edge_list()), (&labels_out, write_labels(&labels))] {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
            println!("{} nodes, {} edges", graph.num_nodes(), graph.num_edges());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Grouped {
    #[serde(skip_serializing_if = "Option::is_none")]
    per_dim: Option<BTreeMap<String, MetricsReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variants: Option<BTreeMap<String, MetricsReport>>,
    config_echo: BTreeMap<String, String>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("metrics serialize");
    text.push('\n');
    text
}

/// Embeds the full graph (writing its artifacts when asked), scores link
/// prediction on a fresh split and node classification when labels exist.
fn pipeline(cfg: &PipelineConfig, write_artifacts: bool) -> Result<MetricsReport> {
    let graph = load_graph(cfg)?;
    let labels = match &cfg.labels {
        Some(_) => Some(load_labels(cfg)?),
        None => None,
    };
    let full = embed_stage(cfg, &graph)?;
    if write_artifacts {
        if let Some(set) = &full.cascades {
            write_out(cfg, &cfg.cascades, &write_cascades(set))?;
        }
        if let Some(w) = &full.matrix {
            write_out(cfg, &cfg.matrix, &write_matrix(w))?;
            println!("latent ties = {}", w.latent_tie_count(&graph));
        }
        write_out(cfg, &cfg.history, &write_history(&full.trained.history))?;
        write_out(cfg, &cfg.model, &write_model(&full.trained.model))?;
        write_out(cfg, &cfg.embeddings, &write_embeddings(&full.trained.embeddings))?;
    }
    let link = run_link_prediction(
        &graph,
        cfg.fraction,
        cfg.operator,
        cfg.logistic_options(),
        stage_seed(cfg.seed, 5),
        |g| embed_graph(cfg, g),
    )?;
    let mut report = MetricsReport::default().with_link(&link);
    if let Some(labels) = labels {
        if labels.len() != graph.num_nodes() {
            bail!(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.num_nodes()
            )));
        }
        let scores = node_classification_experiment(
            &full.trained.embeddings,
            &labels,
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

fn print_summary(report: &MetricsReport) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "auc {} micro_f1 {} macro_f1 {}",
        fmt(report.auc),
        fmt(report.micro_f1),
        fmt(report.macro_f1)
    );
}
