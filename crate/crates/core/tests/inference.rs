use latentmesh::diffusion::{read_cascades, sample_cascades, Cascade, CascadeSet};
use latentmesh::graph::generators::path;
use latentmesh::inference::{
    closed_form_estimate, mle_estimate, read_matrix, set_log_likelihood, write_matrix, LikelihoodMode,
    MleOptions, TransmissionMatrix,
};
use proptest::prelude::*;

#[test]
fn path_graph_has_forward_latent_tie_only() {
    let g = path(3, true);
    let set = sample_cascades(&g, 1.0, 10.0, 67, 1).unwrap();
    let w = closed_form_estimate(&set, 0.0);
    assert!(w.get(0, 2) > 0.0);
    assert_eq!(w.get(2, 0), 0.0);
    assert!(w.latent_tie_count(&g) > 0);
}

#[test]
fn threshold_above_max_empties_the_matrix() {
    let set = sample_cascades(&path(4, true), 1.0, 10.0, 5, 2).unwrap();
    let w = closed_form_estimate(&set, 0.0);
    assert_eq!(closed_form_estimate(&set, w.max() * 2.0).nonzero_count(), 0);
}

#[test]
fn two_node_mle_is_consistent() {
    let set = sample_cascades(&path(2, true), 1.0, 10.0, 1000, 9).unwrap();
    let set = CascadeSet::new(
        set.window(),
        2,
        set.cascades().iter().filter(|c| c.root() == 0).cloned().collect(),
    )
    .unwrap();
    assert_eq!(set.len(), 1000);
    let mut init = TransmissionMatrix::zeros(2);
    init.set(0, 1, 0.5).unwrap();
    let outcome = mle_estimate(
        &set,
        &init,
        MleOptions {
            steps: 200,
            step_size: 1e-3,
            mode: LikelihoodMode::Survival,
        },
    )
    .unwrap();
    let w = outcome.matrix.get(0, 1);
    assert!((0.8..=1.25).contains(&w), "estimate {w}");
    assert!(outcome.objective >= outcome.initial_objective);
}

#[test]
fn mle_never_decreases_the_objective() {
    let text = "#T=10 N=3\n0:0 1:0.5 2:1.75\n1:0 2:0.25\n2:0\n0:0 2:3\n";
    let set = read_cascades(text).unwrap();
    let init = closed_form_estimate(&set, 0.0);
    for mode in [LikelihoodMode::PaperLiteral, LikelihoodMode::Survival] {
        let options = MleOptions {
            mode,
            ..MleOptions::default()
        };
        let outcome = mle_estimate(&set, &init, options).unwrap();
        let start = set_log_likelihood(&set, &init, mode).unwrap().value;
        assert_eq!(outcome.initial_objective, start);
        assert!(outcome.objective >= start);
        assert_eq!(set_log_likelihood(&set, &outcome.matrix, mode).unwrap().value, outcome.objective);
        for (i, j, _) in outcome.matrix.nonzeros() {
            assert_ne!(i, j);
        }
    }
}

fn cascade_strategy(n: usize) -> impl Strategy<Value = Cascade> {
    (0..n, proptest::collection::vec(proptest::option::of(0.01f64..10.0), n)).prop_map(move |(root, times)| {
        let acts: Vec<(usize, f64)> = times
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != root)
            .filter_map(|(v, t)| t.map(|t| (v, t)))
            .chain(std::iter::once((root, 0.0)))
            .collect();
        Cascade::new(n, root, &acts, 10.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_is_valid_and_order_free(cascades in proptest::collection::vec(cascade_strategy(5), 1..8)) {
        let set = CascadeSet::new(10.0, 5, cascades.clone()).unwrap();
        let w = closed_form_estimate(&set, 0.0);
        for i in 0..5 {
            prop_assert_eq!(w.get(i, i), 0.0);
            for j in 0..5 {
                prop_assert!(w.get(i, j) >= 0.0 && w.get(i, j).is_finite());
            }
        }
        let mut reversed = cascades;
        reversed.reverse();
        let w2 = closed_form_estimate(&CascadeSet::new(10.0, 5, reversed).unwrap(), 0.0);
        let (a, b) = (w.nonzeros(), w2.nonzeros());
        prop_assert_eq!(a.len(), b.len());
        for ((i, j, x), (k, l, y)) in a.into_iter().zip(b) {
            prop_assert_eq!((i, j), (k, l));
            prop_assert!((x - y).abs() <= 1e-12 * x.abs());
        }
        let back = read_matrix(&write_matrix(&w)).unwrap();
        prop_assert_eq!(back.nonzero_count(), w.nonzero_count());
    }

    #[test]
    fn likelihood_is_additive_over_cascades(c in cascade_strategy(4), k in 1usize..5) {
        let mut w = TransmissionMatrix::zeros(4);
        for (idx, (i, j)) in [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)].into_iter().enumerate() {
            w.set(i, j, 0.3 + idx as f64 * 0.2).unwrap();
        }
        for mode in [LikelihoodMode::PaperLiteral, LikelihoodMode::Survival] {
            let one = set_log_likelihood(&CascadeSet::new(10.0, 4, vec![c.clone()]).unwrap(), &w, mode).unwrap().value;
            let many = set_log_likelihood(&CascadeSet::new(10.0, 4, vec![c.clone(); k]).unwrap(), &w, mode).unwrap().value;
            prop_assert!((many - k as f64 * one).abs() <= 1e-9 * many.abs().max(1.0));
        }
    }
}
