use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stgc::data::{self, segment_indices, Dataset, SynthSpec};
use stgc::layer::{self, FilterBank, Mode, SignalSequence};
use stgc::spectral::graph_spectrum;
use stgc::verify::{random_bank, random_graph, random_matrix, random_sequence};
use stgc::{Matrix, StaticGraph};

fn graph_strategy() -> impl Strategy<Value = StaticGraph<f64>> {
    (2usize..10, 0.0f64..1.0, any::<u64>())
        .prop_map(|(n, p, seed)| random_graph(n, p, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_spectrum_in_range(graph in graph_strategy()) {
        let l = graph.laplacian_norm();
        prop_assert!(l.is_symmetric(0.0));
        let d = stgc::spectral::eigendecompose(l, 1e-12).unwrap();
        for &lambda in &d.eigenvalues {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&lambda));
        }
    }

    #[test]
    fn fields_form_a_semigroup(graph in graph_strategy(), a in 0usize..4, b in 0usize..4) {
        let f = graph.fields(a + b + 1);
        let err = f[a].matmul(&f[b]).max_abs_diff(&f[a + b]);
        prop_assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn fields_do_not_expand(graph in graph_strategy(), k in 0usize..8) {
        let norm = graph.receptive_field(k).matrix.power_iteration_norm(1e-12, 10_000);
        prop_assert!(norm <= 1.0 + 1e-8, "‖ψ_{k}‖ = {norm}");
    }

    #[test]
    fn forward_is_linear(graph in graph_strategy(), seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = graph.n_nodes();
        let bank = random_bank(Mode::Dependent, 2, 3, 2, 3, 0.5, 1.0, &mut rng);
        let x = random_sequence(n, 2, 4, &mut rng);
        let z = random_sequence(n, 2, 4, &mut rng);
        let mix = SignalSequence::new(
            x.frames().iter().zip(z.frames()).map(|(p, q)| p.scale(a).add(&q.scale(b))).collect(),
        ).unwrap();
        let fx = layer::forward(&graph, &bank, &x).unwrap();
        let fz = layer::forward(&graph, &bank, &z).unwrap();
        let fm = layer::forward(&graph, &bank, &mix).unwrap();
        for t in 0..4 {
            let expect = fx.outputs[t].scale(a).add(&fz.outputs[t].scale(b));
            prop_assert!(fm.outputs[t].max_abs_diff(&expect) <= 1e-10);
        }
    }

    #[test]
    fn independent_matches_diagonal_dependent(graph in graph_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = graph.n_nodes();
        let bank = random_bank(Mode::Independent, 3, 4, 3, 3, 0.5, 1.0, &mut rng);
        let x = random_sequence(n, 3, 5, &mut rng);
        let ind = layer::forward_indep(&graph, &bank, &x).unwrap();
        let dep = layer::forward_dep(&graph, &bank.to_dependent(), &x).unwrap();
        for (a, b) in ind.outputs.iter().zip(&dep.outputs) {
            prop_assert!(a.max_abs_diff(b) <= 1e-12);
        }
    }

    #[test]
    fn conv_matches_spectral_path(graph in graph_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = graph.n_nodes();
        let bank = random_bank(Mode::Dependent, 1, 4, 3, 2, 0.1, 1.0, &mut rng);
        let x = random_matrix(n, 3, 1.0, &mut rng);
        let d = graph_spectrum(&graph, 1e-12).unwrap();
        let spatial = layer::multiscale_conv(&graph, &x, bank.v()).unwrap();
        let spectral = d
            .igft(&stgc::spectral::frequency_response(&d, &bank, &d.gft(&x).unwrap()).unwrap())
            .unwrap();
        prop_assert!(spatial.rel_frobenius_diff(&spectral) <= 1e-8);
    }

    #[test]
    fn projection_postconditions(seed in any::<u64>(), k1 in 1usize..5, d in 1usize..6, scale in 0.0f64..5.0, dep in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if dep { Mode::Dependent } else { Mode::Independent };
        let raw = {
            let mut b = FilterBank::zeros(mode, k1, 2, d, d).unwrap();
            for p in b.params_mut() {
                *p = rand::Rng::gen_range(&mut rng, -scale..=scale);
            }
            b
        };
        let once = raw.project_stable(1e-3);
        prop_assert!(once.satisfies_constraints(1e-3));
        prop_assert!(once.w_norm_sum() <= 1.0 - 1e-3);
        let twice = once.project_stable(1e-3);
        prop_assert!(once.params().zip(twice.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        // V is never touched
        prop_assert!(once.v() == raw.v());
    }

    #[test]
    fn segment_indices_increase(len in 1usize..200, n_seg in 1usize..40, seed in any::<u64>()) {
        prop_assume!(len >= n_seg);
        let idx = segment_indices(len, n_seg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(idx.len(), n_seg);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*idx.last().unwrap() < len);
    }

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), classes in 1usize..5, per in 0usize..3, joints in 4usize..12, frames in 4usize..9) {
        let spec = SynthSpec {
            n_classes: classes,
            n_per_class: per,
            test_per_class: 1,
            n_joints: joints,
            frames,
            noise: 0.1,
        };
        let ds = data::synth_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let bytes = ds.to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn edge_list_round_trip(graph in graph_strategy()) {
        let back = StaticGraph::<f64>::parse_edge_list(&graph.to_edge_list()).unwrap();
        prop_assert_eq!(back.adjacency(), graph.adjacency());
    }
}

#[test]
fn spectral_fields_match_dense_powers() {
    let graph = StaticGraph::<f64>::from_bones(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let mut p = Matrix::identity(5);
    for k in 0..10 {
        assert!(graph.receptive_field(k).matrix.max_abs_diff(&p) <= 1e-14);
        p = p.matmul(graph.laplacian_scaled());
    }
}
