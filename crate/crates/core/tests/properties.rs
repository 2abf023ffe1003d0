//! Property tests for graphs, Laplacians, the eigensolver, the network and
//! the penalties. Oracles are computed here with nalgebra and plain loops.

use fiedler_core::graph::VertexSubset;
use fiedler_core::network::{loss_and_grad, Batch};
use fiedler_core::regularization::{fiedler_penalty, PenaltyMode, PenaltyState};
use fiedler_core::spectral;
use fiedler_core::{build_graph, init_model, laplacian, Activation, MlpModel, WeightedGraph};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_connected(seed: u64, n: usize, extra: f64) -> Vec<(usize, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v, rng.random_range(0.05..3.0)));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < extra && !edges.iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a)) {
                edges.push((a, b, rng.random_range(0.05..3.0)));
            }
        }
    }
    edges
}

fn dense(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b, w) in edges {
        l[(a, b)] -= w;
        l[(b, a)] -= w;
        l[(a, a)] += w;
        l[(b, b)] += w;
    }
    l
}

fn oracle_lambda2(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    let mut v: Vec<f64> = SymmetricEigen::new(dense(n, edges)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v[1]
}

fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
    WeightedGraph::from_edges(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_sums_vanish(seed in any::<u64>(), n in 2usize..=50, extra in 0.0f64..0.5) {
        let g = graph(n, &random_connected(seed, n, extra));
        let lap = laplacian(&g);
        let tol = 1e-12 * g.max_degree().max(1.0);
        for s in lap.row_sums() {
            prop_assert!(s.abs() <= tol);
        }
    }

    #[test]
    fn quadratic_form_matches_matrix_product(seed in any::<u64>(), n in 2usize..=50, extra in 0.0f64..0.5) {
        let edges = random_connected(seed, n, extra);
        let g = graph(n, &edges);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let zv = DVector::from_vec(z.clone());
        let want = (zv.transpose() * dense(n, &edges) * &zv)[(0, 0)];
        let got = g.quadratic_form(&z).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-12));
        let lap_got = laplacian(&g).quadratic_form(&z).unwrap();
        prop_assert!((lap_got - want).abs() <= 1e-10 * want.abs().max(1e-12));
    }

    #[test]
    fn indicator_quadratic_form_is_cut_size(seed in any::<u64>(), n in 2usize..=10) {
        let edges = random_connected(seed, n, 0.4);
        let g = graph(n, &edges);
        for mask in 0u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let cut: f64 = edges
                .iter()
                .filter(|&&(a, b, _)| (mask >> a & 1) != (mask >> b & 1))
                .map(|e| e.2)
                .sum();
            let s = VertexSubset::new(members);
            prop_assert_eq!(g.quadratic_form(&s.indicator(n)).unwrap(), cut);
            prop_assert_eq!(g.cut_size(&s), cut);
        }
    }

    #[test]
    fn cheeger_sandwich(seed in any::<u64>(), n in 2usize..=10) {
        let g = graph(n, &random_connected(seed, n, 0.3));
        let l2 = spectral::fiedler_pair(&laplacian(&g), 1e-12).unwrap().lambda2;
        let (phi, _) = g.edge_expansion_bruteforce().unwrap();
        prop_assert!(l2 / 2.0 <= phi + 1e-9);
        prop_assert!(phi <= (2.0 * g.max_degree() * l2).sqrt() + 1e-9);
    }

    #[test]
    fn laplacian_ignores_weight_signs(seed in any::<u64>(), flips in any::<u64>()) {
        let mut model = init_model(&[4, 6, 3], Activation::Relu, false, seed).unwrap();
        let before = laplacian(&build_graph(&model, false).unwrap());
        let mut k = 0;
        for w in model.weights_mut() {
            for x in w.iter_mut() {
                if flips >> (k % 64) & 1 == 1 {
                    *x = -*x;
                }
                k += 1;
            }
        }
        prop_assert_eq!(laplacian(&build_graph(&model, false).unwrap()), before);
    }

    #[test]
    fn test_vector_bounds_lambda2(seed in any::<u64>(), n in 2usize..=50) {
        let edges = random_connected(seed, n, 0.15);
        let lap = laplacian(&graph(n, &edges));
        let l2 = spectral::fiedler_pair(&lap, 1e-10).unwrap().lambda2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(b) = spectral::test_vector_bound(&lap, &u) {
            prop_assert!(b >= l2 - 1e-9);
        }
    }

    #[test]
    fn lambda2_is_concave_in_weights(seed in any::<u64>(), n in 3usize..=15, a in 1usize..=9) {
        let alpha = a as f64 / 10.0;
        let w1 = random_connected(seed, n, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let w2: Vec<_> = w1.iter().map(|&(x, y, _)| (x, y, rng.random_range(0.0..3.0))).collect();
        let mix: Vec<_> = w1.iter().zip(&w2).map(|(p, q)| (p.0, p.1, alpha * p.2 + (1.0 - alpha) * q.2)).collect();
        let lhs = oracle_lambda2(n, &mix);
        prop_assert!(lhs >= alpha * oracle_lambda2(n, &w1) + (1.0 - alpha) * oracle_lambda2(n, &w2) - 1e-9);
    }

    #[test]
    fn removing_an_edge_never_raises_lambda2(seed in any::<u64>(), n in 3usize..=20, pick in any::<usize>()) {
        let g = graph(n, &random_connected(seed, n, 0.3));
        let full = spectral::dense_eigenpairs(&laplacian(&g))[1].0;
        let fewer = spectral::dense_eigenpairs(&laplacian(&g.without_edge(pick % g.edges().len())))[1].0;
        prop_assert!(fewer <= full + 1e-9);
    }

    #[test]
    fn scaling_weights_scales_lambda2(seed in any::<u64>(), n in 2usize..=30, t in 0.01f64..1.0) {
        let edges = random_connected(seed, n, 0.2);
        let g = graph(n, &edges);
        let scaled = g.with_weights(&edges.iter().map(|e| t * e.2).collect::<Vec<_>>()).unwrap();
        let a = spectral::fiedler_pair(&laplacian(&g), 1e-11).unwrap().lambda2;
        let b = spectral::fiedler_pair(&laplacian(&scaled), 1e-11).unwrap().lambda2;
        prop_assert!((b - t * a).abs() <= 1e-9);
    }

    #[test]
    fn returned_pairs_meet_the_residual_tolerance(seed in any::<u64>(), n in 2usize..=120) {
        let edges = random_connected(seed, n, 3.0 / n as f64);
        let lap = laplacian(&graph(n, &edges));
        let tol = 1e-9;
        let pair = spectral::fiedler_pair(&lap, tol).unwrap();
        let v = DVector::from_vec(pair.v2.clone());
        let residual = (dense(n, &edges) * &v - pair.lambda2 * &v).norm();
        prop_assert!(residual <= tol.max(1e-12 * n as f64));
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        prop_assert!(v.sum().abs() < 1e-10);
    }

    #[test]
    fn loss_is_invariant_to_batch_order(seed in any::<u64>(), rows in 2usize..20) {
        let model = init_model(&[3, 7, 4], Activation::Tanh, true, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((rows, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..4)).collect();
        let mut perm: Vec<usize> = (0..rows).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % rows);
        let px = x.select(ndarray::Axis(0), &perm);
        let py: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let (la, ga) = loss_and_grad(&model, &Batch::new(x, y).unwrap()).unwrap();
        let (lb, gb) = loss_and_grad(&model, &Batch::new(px, py).unwrap()).unwrap();
        prop_assert!((la - lb).abs() <= 1e-12);
        for (a, b) in ga.weights.iter().zip(&gb.weights) {
            prop_assert!(a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12));
        }
    }

    #[test]
    fn logits_are_homogeneous_in_last_layer(seed in any::<u64>(), s in -3.0f64..3.0) {
        let model = init_model(&[4, 5, 5, 3], Activation::Relu, true, seed).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let (base, _) = model.forward(&x).unwrap();
        let mut scaled = model.clone();
        let last = scaled.depth() - 1;
        scaled.weights_mut()[last].mapv_inplace(|w| w * s);
        let (out, _) = scaled.forward(&x).unwrap();
        prop_assert!(out.iter().zip(base.iter()).all(|(a, b)| (a - s * b).abs() <= 1e-12 * (1.0 + b.abs())));
    }

    #[test]
    fn penalty_sign_flip_invariance(seed in any::<u64>(), layer in 0usize..2, row in 0usize..4, col in 0usize..4) {
        let model = init_model(&[4, 4, 4], Activation::Relu, false, seed).unwrap();
        let u: Vec<f64> = (0..12).map(|i| ((i as f64) * 1.3 + seed as f64 % 7.0).cos()).collect();
        let st = PenaltyState::new(&u, 10, 0.3, PenaltyMode::Variational).unwrap();
        let mut flipped = model.clone();
        flipped.weights_mut()[layer][[row, col]] *= -1.0;
        let a = fiedler_penalty(&model, &st).unwrap();
        let b = fiedler_penalty(&flipped, &st).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.max(1.0));
        prop_assert_eq!(a.weight_grads[layer][[row, col]], -b.weight_grads[layer][[row, col]]);
    }

    #[test]
    fn variational_penalty_majorizes_exact(seed in any::<u64>()) {
        let model = init_model(&[3, 6, 2], Activation::Relu, false, seed).unwrap();
        let lap = laplacian(&build_graph(&model, false).unwrap());
        let l2 = spectral::fiedler_pair(&lap, 1e-12).unwrap().lambda2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
        let delta = 0.2;
        let var = fiedler_penalty(&model, &PenaltyState::new(&u, 1, delta, PenaltyMode::Variational).unwrap()).unwrap();
        let exact = fiedler_penalty(&model, &PenaltyState::new(&u, 1, delta, PenaltyMode::Exact).unwrap()).unwrap();
        prop_assert!(var.value >= delta * l2 - 1e-9);
        prop_assert!((exact.value - delta * l2).abs() <= 1e-9);
    }
}

#[test]
fn penalty_at_the_fiedler_vector_equals_delta_lambda2() {
    for seed in 0..20 {
        let model = init_model(&[5, 8, 3], Activation::Relu, true, seed).unwrap();
        let pair = spectral::fiedler_pair(&laplacian(&build_graph(&model, false).unwrap()), 1e-12).unwrap();
        let st = PenaltyState::new(&pair.v2, 100, 0.01, PenaltyMode::Variational).unwrap();
        let p = fiedler_penalty(&model, &st).unwrap();
        assert!((p.value - 0.01 * pair.lambda2).abs() < 1e-12);
    }
}

#[test]
fn negative_weights_keep_model_graph_unchanged_with_biases() {
    let weights = vec![Array2::from_shape_vec((2, 2), vec![1.0, -2.0, 0.5, -0.25]).unwrap()];
    let biases = Some(vec![Array1::from_vec(vec![0.1, -0.3])]);
    let m = MlpModel::from_parts(vec![2, 2], weights, biases, Activation::Relu).unwrap();
    let g = build_graph(&m, true).unwrap();
    assert_eq!(g.num_vertices(), 5);
    assert!(g.edges().iter().all(|e| e.weight > 0.0));
}
