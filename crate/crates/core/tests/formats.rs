use latentmesh::diffusion::{read_cascades, write_cascades, Cascade, CascadeSet};
use latentmesh::eval::{read_labels, write_labels};
use latentmesh::inference::{read_matrix, write_matrix, TransmissionMatrix};
use latentmesh::laae::{read_embeddings, read_model, write_embeddings, write_model, LaaeModel, TrainConfig};
use latentmesh::textfmt::sig9;
use latentmesh::Matrix;
use proptest::prelude::*;

#[test]
fn sig9_keeps_nine_significant_digits() {
    assert_eq!(sig9(0.0), "0");
    assert_eq!(sig9(1.0 / 3.0).parse::<f64>().unwrap(), 0.333333333);
    assert_eq!(sig9(-2.5), "-2.5");
}

#[test]
fn model_text_is_stable() {
    let cfg = TrainConfig {
        embed_dim: 3,
        noise_dim: 2,
        encoder_hidden: 5,
        generator_hidden: 4,
        critic_hidden: 4,
        ..TrainConfig::default()
    };
    let model = LaaeModel::new(6, &cfg).unwrap();
    let text = write_model(&model);
    let back = read_model(&text).unwrap();
    assert_eq!(write_model(&back), text);
    assert_eq!(back.num_nodes(), 6);
    assert!(read_model(&text.replace("[decoder]", "[decodr]")).is_err());
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(read_embeddings("0 1.0 2.0\n1 3.0\n").is_err());
    assert!(read_embeddings("0 1.0\n0 2.0\n").is_err());
    assert!(read_labels("0 1\n2 0\n").is_err());
    assert!(read_cascades("0:0 1:1\n").is_err());
    assert!(read_matrix("0 1 nan\n").is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embeddings_round_trip(rows in 1usize..8, cols in 1usize..6, data in proptest::collection::vec(finite(), 48)) {
        let y = Matrix::from_vec(rows, cols, data[..rows * cols].to_vec()).unwrap();
        let text = write_embeddings(&y);
        let back = read_embeddings(&text).unwrap();
        prop_assert_eq!(back.shape(), y.shape());
        prop_assert_eq!(write_embeddings(&back), text);
        for (a, b) in back.as_slice().iter().zip(y.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn labels_round_trip(labels in proptest::collection::vec(0usize..5, 1..30)) {
        prop_assert_eq!(read_labels(&write_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn matrix_round_trip(entries in proptest::collection::vec((0usize..6, 0usize..6, 1e-6f64..1e6), 0..20)) {
        let mut w = TransmissionMatrix::zeros(6);
        for (i, j, v) in entries {
            if i != j {
                w.set(i, j, v).unwrap();
            }
        }
        let text = write_matrix(&w);
        let back = read_matrix(&text).unwrap();
        prop_assert_eq!(write_matrix(&back), text);
        prop_assert_eq!(back.nonzero_count(), w.nonzero_count());
    }

    #[test]
    fn cascades_round_trip(times in proptest::collection::vec(proptest::collection::vec(proptest::option::of(0.001f64..5.0), 5), 1..6)) {
        let cascades: Vec<Cascade> = times
            .iter()
            .enumerate()
            .map(|(k, ts)| {
                let root = k % 5;
                let acts: Vec<(usize, f64)> = ts
                    .iter()
                    .enumerate()
                    .filter(|&(v, _)| v != root)
                    .filter_map(|(v, t)| t.map(|t| (v, t)))
                    .chain(std::iter::once((root, 0.0)))
                    .collect();
                Cascade::new(5, root, &acts, 5.0).unwrap()
            })
            .collect();
        let set = CascadeSet::new(5.0, 5, cascades).unwrap();
        let text = write_cascades(&set);
        let back = read_cascades(&text).unwrap();
        prop_assert_eq!(write_cascades(&back), text);
        prop_assert_eq!(back.len(), set.len());
    }
}
