use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use latentmesh::diffusion::{cascade_rng, simulate_cascade, Cascade, CascadeSet};
use latentmesh::eval::{node_classification_experiment, run_link_prediction, RatioScore};
use latentmesh::graph::generators::{erdos_renyi_directed, path};
use latentmesh::inference::{
    cascade_log_likelihood, closed_form_estimate, mle_estimate, set_log_likelihood, LikelihoodMode, MleOptions,
    TransmissionMatrix,
};
use latentmesh::laae::{
    critic_on_embeddings, loss_discriminator, loss_generator, loss_global, loss_local, train, train_with_observer,
    LaaeModel, TrainConfig, TrainEvent,
};
use latentmesh::nn::{init_net, Activation, DenseNet};
use latentmesh::pipeline::{embed_graph, random_embeddings, run_pipeline, stage_seed, PipelineConfig};
use latentmesh::{Graph, Matrix};
use latentmesh_validation::{brute_force_log_likelihood, central_difference, max_relative_error, pairwise_auc, toy_sbm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SBM_SEEDS: u64 = 5;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed < limit, format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_cascade(n: usize, window: f64, rng: &mut ChaCha8Rng) -> Cascade {
    let root = rng.random_range(0..n);
    let mut acts = vec![(root, 0.0)];
    for v in (0..n).filter(|&v| v != root) {
        if rng.random_bool(0.7) {
            acts.push((v, rng.random_range(0.01..window)));
        }
    }
    Cascade::new(n, root, &acts, window).unwrap()
}

fn likelihood_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=5);
        let window = rng.random_range(1.0..10.0);
        let mut w = TransmissionMatrix::zeros(n);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let v = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) };
                w.set(i, j, v).unwrap();
                dense[i][j] = v;
            }
        }
        for _ in 0..k {
            let c = random_cascade(n, window, &mut rng);
            for (mode, survival) in [(LikelihoodMode::PaperLiteral, false), (LikelihoodMode::Survival, true)] {
                let got = cascade_log_likelihood(&c, &w, window, mode).unwrap().value;
                let want = brute_force_log_likelihood(c.times(), c.root(), &dense, window, survival);
                worst = worst.max((got - want).abs());
            }
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1));
    Verdict::new(worst <= 1e-9 && fast, format!("max |diff| {worst:.2e} over 50 instances, {time}"))
}

fn dense_net_error(rng: &mut ChaCha8Rng, seed: u64) -> f64 {
    let depth = rng.random_range(1..=3);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=5)).collect();
    let acts: Vec<Activation> = (0..depth)
        .map(|_| [Activation::Relu, Activation::Sigmoid, Activation::Identity][rng.random_range(0..3)])
        .collect();
    let mut net = init_net(&dims, &acts, seed).unwrap();
    let p = uniform(1, net.num_params(), -1.0, 1.0, rng);
    net.set_params_flat(p.as_slice()).unwrap();
    let x = uniform(3, dims[0], -1.0, 1.0, rng);
    let c = uniform(3, dims[depth], -1.0, 1.0, rng);
    let weighted = |out: &Matrix| out.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum::<f64>();
    let cache = net.forward(&x).unwrap();
    let (grads, input_grad) = net.backward(&cache, &c).unwrap();
    let start = net.params_flat();
    let mut probe = net.clone();
    let numeric = central_difference(&start, 1e-5, |q| {
        probe.set_params_flat(q).unwrap();
        weighted(&probe.predict(&x).unwrap())
    });
    let numeric_input = central_difference(x.as_slice(), 1e-5, |q| {
        let xi = Matrix::from_vec(x.rows(), x.cols(), q.to_vec()).unwrap();
        weighted(&net.predict(&xi).unwrap())
    });
    max_relative_error(&grads.to_flat(), &numeric).max(max_relative_error(input_grad.as_slice(), &numeric_input))
}

fn fd_against(model: &LaaeModel, pick: fn(&mut LaaeModel) -> &mut DenseNet, analytic: &[f64], loss: impl Fn(&LaaeModel) -> f64) -> f64 {
    let mut probe = model.clone();
    let start = pick(&mut probe).params_flat();
    let numeric = central_difference(&start, 1e-5, |q| {
        pick(&mut probe).set_params_flat(q).unwrap();
        loss(&probe)
    });
    max_relative_error(analytic, &numeric)
}

fn laae_error(rng: &mut ChaCha8Rng, seed: u64) -> f64 {
    let n = 6;
    let cfg = TrainConfig {
        embed_dim: 3,
        noise_dim: 2,
        batch_size: 4,
        encoder_hidden: 5,
        generator_hidden: 4,
        critic_hidden: 4,
        clip: 0.5,
        seed,
        ..TrainConfig::default()
    };
    let mut model = LaaeModel::new(n, &cfg).unwrap();
    for net in [&mut model.encoder, &mut model.decoder, &mut model.generator, &mut model.discriminator] {
        let p = uniform(1, net.num_params(), -0.5, 0.5, rng);
        net.set_params_flat(p.as_slice()).unwrap();
    }
    let x = uniform(4, n, 0.0, 1.0, rng);
    let z = uniform(5, 2, -1.0, 1.0, rng);
    let mut weights = Matrix::zeros(4, 4);
    for i in 0..4 {
        for j in (i + 1)..4 {
            let v = rng.random_range(0.0..1.0);
            weights[(i, j)] = v;
            weights[(j, i)] = v;
        }
    }
    let (_, enc, dec) = loss_global(&model, &x).unwrap();
    let (_, local) = loss_local(&model, &x, &weights).unwrap();
    let (_, adv_enc) = critic_on_embeddings(&model, &x).unwrap();
    let (_, critic) = loss_discriminator(&model, &x, &z).unwrap();
    let (_, generator) = loss_generator(&model, &x, &z).unwrap();
    [
        fd_against(&model, |m| &mut m.encoder, &enc.to_flat(), |m| loss_global(m, &x).unwrap().0),
        fd_against(&model, |m| &mut m.decoder, &dec.to_flat(), |m| loss_global(m, &x).unwrap().0),
        fd_against(&model, |m| &mut m.encoder, &local.to_flat(), |m| loss_local(m, &x, &weights).unwrap().0),
        fd_against(&model, |m| &mut m.encoder, &adv_enc.to_flat(), |m| critic_on_embeddings(m, &x).unwrap().0),
        fd_against(&model, |m| &mut m.discriminator, &critic.to_flat(), |m| loss_discriminator(m, &x, &z).unwrap().0),
        fd_against(&model, |m| &mut m.generator, &generator.to_flat(), |m| loss_generator(m, &x, &z).unwrap().0),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn gradient_integrity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let configs = 20;
    let (mut dense, mut laae): (f64, f64) = (0.0, 0.0);
    for seed in 0..configs {
        dense = dense.max(dense_net_error(&mut rng, seed));
        laae = laae.max(laae_error(&mut rng, seed));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(30));
    Verdict::new(
        dense <= 1e-4 && laae <= 1e-4 && fast,
        format!("max rel err dense {dense:.2e}, laae losses {laae:.2e} over {configs} configs, {time}"),
    )
}

fn structure_recovery() -> Verdict {
    let start = Instant::now();
    let (n, k, window) = (30, 500, 10.0);
    let graph = erdos_renyi_directed(n, 0.1, 11).unwrap();
    let cascades: Vec<Cascade> = (0..k)
        .map(|c| simulate_cascade(&graph, c % n, 1.0, window, &mut cascade_rng(11, c % n, c / n)).unwrap())
        .collect();
    let set = CascadeSet::new(window, n, cascades).unwrap();
    let w = closed_form_estimate(&set, 0.0);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if graph.has_edge(i, j) {
                pos.push(w.get(i, j));
            } else {
                neg.push(w.get(i, j));
            }
        }
    }
    let auc = pairwise_auc(&pos, &neg);
    let outcome = mle_estimate(&set, &w, MleOptions::default()).unwrap();
    let initial = set_log_likelihood(&set, &w, MleOptions::default().mode).unwrap().value;
    let monotone = outcome.objective >= initial;
    let (fast, time) = within(start.elapsed(), Duration::from_secs(120));
    Verdict::new(
        auc >= 0.8 && monotone && fast,
        format!(
            "pair AUC {auc:.4} (>= 0.8), objective {initial:.4} -> {:.4}, {time}",
            outcome.objective
        ),
    )
}

fn latent_ties() -> Verdict {
    let graph = path(3, true);
    let cascades: Vec<Cascade> = (0..200)
        .map(|c| simulate_cascade(&graph, c % 3, 1.0, 10.0, &mut cascade_rng(3, c % 3, c / 3)).unwrap())
        .collect();
    let w = closed_form_estimate(&CascadeSet::new(10.0, 3, cascades).unwrap(), 0.0);
    let (fwd, back) = (w.get(0, 2), w.get(2, 0));
    Verdict::new(fwd > 0.0 && back == 0.0, format!("W[0][2] = {fwd:.4}, W[2][0] = {back}"))
}

fn bits(net: &DenseNet) -> Vec<u64> {
    net.params_flat().iter().map(|v| v.to_bits()).collect()
}

fn adversarial_mechanics() -> Verdict {
    let n = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = uniform(n, n, 0.0, 1.0, &mut rng);
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.0..1.0);
            weights[(i, j)] = v;
            weights[(j, i)] = v;
        }
    }
    let cfg = TrainConfig {
        embed_dim: 4,
        noise_dim: 4,
        batch_size: 8,
        iterations: 200,
        encoder_hidden: 16,
        generator_hidden: 8,
        critic_hidden: 8,
        critic_step: 0.05,
        clip: 0.05,
        seed: 9,
        ..TrainConfig::default()
    };
    let (mut updates, mut clip_violations, mut worst_sum, mut batches) = (0usize, 0usize, 0.0f64, 0usize);
    let mut zrng = ChaCha8Rng::seed_from_u64(77);
    train_with_observer(&x, &weights, &cfg, |event| match event {
        TrainEvent::CriticStep { model, .. } => {
            updates += 1;
            if model.discriminator.max_abs_param() > cfg.clip {
                clip_violations += 1;
            }
        }
        TrainEvent::IterationEnd { row, model } => {
            if row.iteration % 20 == 0 {
                let rows: Vec<usize> = (0..cfg.batch_size).map(|_| zrng.random_range(0..n)).collect();
                let xb = x.select_rows(&rows);
                let z = uniform(cfg.batch_size, cfg.noise_dim, -1.0, 1.0, &mut zrng);
                let d = loss_discriminator(model, &xb, &z).unwrap().0;
                let g = loss_generator(model, &xb, &z).unwrap().0;
                worst_sum = worst_sum.max((d + g).abs());
                batches += 1;
            }
        }
    })
    .unwrap();

    let frozen_cfg = TrainConfig {
        lambda_adv: 0.0,
        iterations: 50,
        ..cfg.clone()
    };
    let before = LaaeModel::new(n, &frozen_cfg).unwrap();
    let after = train(&x, &weights, &frozen_cfg).unwrap().model;
    let frozen = bits(&before.generator) == bits(&after.generator) && bits(&before.discriminator) == bits(&after.discriminator);
    let encoder_moved = bits(&before.encoder) != bits(&after.encoder);
    Verdict::new(
        updates > 0 && clip_violations == 0 && worst_sum == 0.0 && frozen && encoder_moved,
        format!(
            "{clip_violations} clip violations in {updates} critic updates, max |L_D + L_G| {worst_sum} on {batches} batches, \
             lambda_adv = 0 leaves generator/critic bitwise unchanged: {frozen}"
        ),
    )
}

struct SbmRun {
    link_auc: f64,
    random_auc: f64,
    link_time: Duration,
    full: Vec<RatioScore>,
    no_latent: Vec<RatioScore>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn sbm_run(seed: u64) -> SbmRun {
    let (graph, labels) = toy_sbm(seed);
    let cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let link = |embedder: &dyn Fn(&Graph) -> latentmesh::Result<Matrix>| {
        run_link_prediction(&graph, cfg.fraction, cfg.operator, cfg.logistic_options(), stage_seed(seed, 5), embedder)
            .unwrap()
            .auc
    };
    let started = Instant::now();
    let link_auc = link(&|g| embed_graph(&cfg, g));
    let random_auc = link(&|g| Ok(random_embeddings(g.num_nodes(), cfg.train.embed_dim, stage_seed(seed, 7))));
    let link_time = started.elapsed();
    let classify = |cfg: &PipelineConfig| {
        let y = embed_graph(cfg, &graph).unwrap();
        node_classification_experiment(&y, &labels, &cfg.ratios, cfg.runs, cfg.logistic_options(), stage_seed(seed, 6))
            .unwrap()
    };
    let full = classify(&cfg);
    let no_latent = classify(&PipelineConfig {
        latent: false,
        ..cfg.clone()
    });
    SbmRun {
        link_auc,
        random_auc,
        link_time,
        full,
        no_latent,
    }
}

fn link_prediction(runs: &[SbmRun]) -> Verdict {
    let elapsed = runs.iter().map(|r| r.link_time).sum();
    let auc = mean(runs.iter().map(|r| r.link_auc));
    let random = mean(runs.iter().map(|r| r.random_auc));
    let (fast, time) = within(elapsed, Duration::from_secs(300));
    Verdict::new(
        auc >= 0.85 && (random - 0.5).abs() <= 0.05 && fast,
        format!(
            "mean Hadamard AUC {auc:.4} (>= 0.85), random baseline {random:.4} (0.5 +/- 0.05) over {} seeds, link stage {time}",
            runs.len()
        ),
    )
}

fn at_ratio(scores: &[RatioScore], ratio: f64) -> &RatioScore {
    scores.iter().find(|s| (s.ratio - ratio).abs() < 1e-9).expect("ratio present")
}

fn node_classification(run: &SbmRun) -> Verdict {
    let half = at_ratio(&run.full, 0.5);
    let covered: Vec<String> = run.full.iter().map(|s| format!("{:.1}", s.ratio)).collect();
    let full_range = run.full.len() == 9 && (run.full[0].ratio - 0.1).abs() < 1e-9 && (run.full[8].ratio - 0.9).abs() < 1e-9;
    Verdict::new(
        half.micro >= 0.9 && half.macro_ >= 0.9 && full_range,
        format!(
            "ratio 0.5 over 10 runs: micro {:.4}, macro {:.4} (both >= 0.9); ratios [{}]",
            half.micro,
            half.macro_,
            covered.join(" ")
        ),
    )
}

fn ablation(runs: &[SbmRun]) -> Verdict {
    let full = mean(runs.iter().map(|r| mean(r.full.iter().map(|s| s.micro))));
    let plain = mean(runs.iter().map(|r| mean(r.no_latent.iter().map(|s| s.micro))));
    Verdict::new(
        full >= plain,
        format!(
            "mean micro-F1 full {full:.4} vs no-latent {plain:.4} (gap {:+.4}) over {} seeds",
            full - plain,
            runs.len()
        ),
    )
}

fn determinism() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let (graph, labels) = toy_sbm(21);
    let edges = dir.join("edges.txt");
    let label_path = dir.join("labels.txt");
    std::fs::write(&edges, graph.to_edge_list()).unwrap();
    std::fs::write(&label_path, latentmesh::eval::write_labels(&labels)).unwrap();
    let text = format!(
        "edges = {}\nlabels = {}\nembed_dim = 8\nencoder_hidden = 32\niterations = 60\nbatch_size = 32\nruns = 2\nratios = 0.3,0.5\nseed = 4\n",
        edges.display(),
        label_path.display()
    );
    let run = |name: &str| {
        let cfg_path = dir.join(name);
        std::fs::write(&cfg_path, &text).unwrap();
        let cfg = PipelineConfig::parse(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
        let (g, _) = latentmesh::graph::read_edge_list(cfg.edges.as_ref().unwrap(), cfg.directed).unwrap();
        let l = latentmesh::eval::read_labels_file(cfg.labels.as_ref().unwrap()).unwrap();
        run_pipeline(&cfg, &g, Some(&l)).unwrap().to_json()
    };
    let (a, b) = (run("first.cfg"), run("second.cfg"));
    Verdict::new(a == b, format!("metrics JSON {} bytes, identical: {}", a.len(), a == b))
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Verdict::new(false, format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut record = |id: usize, name: &str, v: Verdict| {
        let line = format!("criterion {id} {name}: {} ({})", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        println!("{line}");
        lines.push((v.passed, line));
    };
    record(1, "likelihood oracle", guarded(likelihood_oracle));
    record(2, "gradient integrity", guarded(gradient_integrity));
    record(3, "structure recovery", guarded(structure_recovery));
    record(4, "latent ties", guarded(latent_ties));
    record(5, "adversarial mechanics", guarded(adversarial_mechanics));

    let runs: Vec<SbmRun> = (0..SBM_SEEDS).filter_map(|s| catch_unwind(|| sbm_run(s)).ok()).collect();
    if runs.len() as u64 == SBM_SEEDS {
        record(6, "link prediction", guarded(|| link_prediction(&runs)));
        record(7, "node classification", guarded(|| node_classification(&runs[0])));
        record(8, "ablation direction", guarded(|| ablation(&runs)));
    } else {
        for (id, name) in [(6, "link prediction"), (7, "node classification"), (8, "ablation direction")] {
            record(id, name, Verdict::new(false, "block-model pipeline panicked"));
        }
    }
    record(9, "determinism", guarded(determinism));

    let failed = lines.iter().filter(|(ok, _)| !ok).count();
    println!("\nacceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
