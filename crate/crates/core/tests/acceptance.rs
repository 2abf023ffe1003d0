//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fiedler_core::bounds::{self, BoundInputs};
use fiedler_core::data::{two_gaussians, DataSource, Normalization, SyntheticSpec};
use fiedler_core::experiment::{self, DataSpec, ExperimentSpec};
use fiedler_core::network::{self, loss_and_grad, Batch};
use fiedler_core::regularization::{
    baseline_penalty, fiedler_penalty, BaselineKind, PenaltyMode, PenaltyState,
};
use fiedler_core::spectral::{self, LanczosOptions};
use fiedler_core::trainer::{self, Regularizer, TrainConfig};
use fiedler_core::{build_graph, init_model, laplacian, Activation, MlpModel, WeightedGraph};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------- independent oracles ----------

fn dense_laplacian(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b, w) in edges {
        l[(a, b)] -= w;
        l[(b, a)] -= w;
        l[(a, a)] += w;
        l[(b, b)] += w;
    }
    l
}

/// Ascending eigenvalues and matching eigenvectors.
fn eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| se.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn lambda2(m: &DMatrix<f64>) -> f64 {
    eig(m).0[1]
}

fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v, rng.random_range(0.1..2.0)));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < extra && !edges.iter().any(|&(x, y, _)| (x, y) == (a, b) || (y, x) == (a, b)) {
                edges.push((a, b, rng.random_range(0.1..2.0)));
            }
        }
    }
    edges
}

fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
    WeightedGraph::from_edges(n, edges).unwrap()
}

fn rel_close(analytic: f64, numeric: f64, rel: f64, floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= rel * analytic.abs().max(numeric.abs()) || diff <= floor
}

// ---------- criterion 1 ----------

fn spectral_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rel, mut worst_res, mut failures) = (0.0f64, 0.0f64, 0);
    for k in 0..200 {
        let n = rng.random_range(2..=50);
        let edges = random_connected(&mut rng, n, 0.1);
        let lap = laplacian(&graph(n, &edges));
        let dense = spectral::fiedler_pair_dense(&lap).unwrap().lambda2;
        // a small basis forces thick restarts on the larger graphs
        let opts = LanczosOptions { max_basis: 16, keep: 6, seed: k, ..LanczosOptions::with_tol(1e-10) };
        let sparse = spectral::fiedler_pair_lanczos(&lap, &opts).unwrap();
        let oracle = dense_laplacian(n, &edges);
        let v = nalgebra::DVector::from_vec(sparse.v2.clone());
        let residual = (&oracle * &v - sparse.lambda2 * &v).norm();
        let rel = (sparse.lambda2 - dense).abs() / dense.abs();
        worst_rel = worst_rel.max(rel);
        worst_res = worst_res.max(residual);
        if rel > 1e-8 || residual > 1e-8 {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 30.0,
        format!("200 graphs n<=50, max rel err {worst_rel:.2e}, max residual {worst_res:.2e}, {failures} failures, {secs:.2}s"),
    )
}

// ---------- criterion 2 ----------

fn eigen_gradient_checks(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let (mut graphs, mut bad) = (0, 0);
    let h = 1e-5;
    while graphs < 50 {
        let n = rng.random_range(3..=12);
        let edges = random_connected(rng, n, 0.3);
        let base = dense_laplacian(n, &edges);
        let (vals, _) = eig(&base);
        if vals[2] - vals[1] < 0.05 {
            continue;
        }
        graphs += 1;
        let g = graph(n, &edges);
        let pair = spectral::fiedler_pair_dense(&laplacian(&g)).unwrap();
        for (k, &(a, b, w)) in edges.iter().enumerate() {
            let grad = pair.gradient(a, b).unwrap();
            // total derivative through the edge weight
            let mut plus = edges.clone();
            plus[k].2 = w + h;
            let mut minus = edges.clone();
            minus[k].2 = w - h;
            let fd = (lambda2(&dense_laplacian(n, &plus)) - lambda2(&dense_laplacian(n, &minus))) / (2.0 * h);
            if !rel_close(grad.wrt_edge_weight, fd, 1e-5, 1e-9) {
                bad += 1;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let grad = pair.gradient(i, j).unwrap();
                // symmetric perturbation of the (i, j) Laplacian entry
                let mut e = DMatrix::zeros(n, n);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let fd = (lambda2(&(&base + &e * h)) - lambda2(&(&base - &e * h))) / (2.0 * h);
                if !rel_close(2.0 * grad.wrt_laplacian_entry, fd, 1e-5, 1e-9) {
                    bad += 1;
                }
                // adjacency entries enter L with a minus sign
                let fd_adj = (lambda2(&(&base - &e * h)) - lambda2(&(&base + &e * h))) / (2.0 * h);
                if !rel_close(2.0 * grad.wrt_adjacency_entry, fd_adj, 1e-5, 1e-9) {
                    bad += 1;
                }
            }
        }
    }
    (graphs, bad)
}

fn objective_parts(model: &MlpModel, batch: &Batch, state: &PenaltyState, exact: &PenaltyState) -> [f64; 5] {
    let (loss, _) = loss_and_grad(model, batch).unwrap();
    [
        loss,
        baseline_penalty(model, BaselineKind::L1, 0.3).unwrap().value,
        baseline_penalty(model, BaselineKind::WeightDecay, 0.2).unwrap().value,
        fiedler_penalty(model, state).unwrap().value,
        fiedler_penalty(model, exact).unwrap().value,
    ]
}

fn backprop_checks(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let (mut models, mut bad, mut checked) = (0, 0, 0);
    let h = 1e-6;
    let mut attempt = 0;
    while models < 20 {
        attempt += 1;
        let dims = vec![rng.random_range(2..=4), rng.random_range(2..=5), rng.random_range(2..=4)];
        let act = if attempt % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let mut model = init_model(&dims, act, true, attempt).unwrap();
        for b in model.biases_mut().unwrap() {
            b.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        let pair = spectral::fiedler_pair_dense(&laplacian(&build_graph(&model, false).unwrap())).unwrap();
        if pair.gap < 1e-3 {
            continue;
        }
        models += 1;
        let inputs = Array2::from_shape_fn((5, dims[0]), |_| rng.random_range(-1.0..1.0));
        let labels = (0..5).map(|_| rng.random_range(0..dims[2])).collect();
        let batch = Batch::new(inputs, labels).unwrap();
        let u: Vec<f64> = (0..model.num_units()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let state = PenaltyState::new(&u, 10, 0.7, PenaltyMode::Variational).unwrap();
        let exact = PenaltyState::new(&u, 10, 0.4, PenaltyMode::Exact).unwrap();

        let (_, loss_grads) = loss_and_grad(&model, &batch).unwrap();
        let analytic_w: [Vec<Array2<f64>>; 5] = [
            loss_grads.weights.clone(),
            baseline_penalty(&model, BaselineKind::L1, 0.3).unwrap().weight_grads,
            baseline_penalty(&model, BaselineKind::WeightDecay, 0.2).unwrap().weight_grads,
            fiedler_penalty(&model, &state).unwrap().weight_grads,
            fiedler_penalty(&model, &exact).unwrap().weight_grads,
        ];
        for l in 0..model.depth() {
            let (rows, cols) = model.weights()[l].dim();
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = model.clone();
                    plus.weights_mut()[l][[r, c]] += h;
                    let mut minus = model.clone();
                    minus.weights_mut()[l][[r, c]] -= h;
                    let fp = objective_parts(&plus, &batch, &state, &exact);
                    let fm = objective_parts(&minus, &batch, &state, &exact);
                    for p in 0..5 {
                        checked += 1;
                        let fd = (fp[p] - fm[p]) / (2.0 * h);
                        if !rel_close(analytic_w[p][l][[r, c]], fd, 1e-5, 1e-9) {
                            bad += 1;
                        }
                    }
                }
            }
            let len = model.biases().unwrap()[l].len();
            for r in 0..len {
                let mut plus = model.clone();
                plus.biases_mut().unwrap()[l][r] += h;
                let mut minus = model.clone();
                minus.biases_mut().unwrap()[l][r] -= h;
                let fd = (network::loss_and_grad(&plus, &batch).unwrap().0
                    - network::loss_and_grad(&minus, &batch).unwrap().0)
                    / (2.0 * h);
                checked += 1;
                if !rel_close(loss_grads.biases.as_ref().unwrap()[l][r], fd, 1e-5, 1e-9) {
                    bad += 1;
                }
            }
        }
    }
    (models, checked, bad)
}

fn gradient_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (graphs, eig_bad) = eigen_gradient_checks(&mut rng);
    let (models, checked, bp_bad) = backprop_checks(&mut rng);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        eig_bad == 0 && bp_bad == 0 && secs < 60.0,
        format!(
            "{graphs} graphs ({eig_bad} eigen-gradient mismatches), {models} models / {checked} partials ({bp_bad} mismatches), {secs:.2}s"
        ),
    )
}

// ---------- criterion 3 ----------

fn inequality_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let slack = 1e-9;
    let mut violations = [0usize; 5];

    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let edges = random_connected(&mut rng, n, 0.3);
        let g = graph(n, &edges);
        let (phi, _) = g.edge_expansion_bruteforce().unwrap();
        let l2 = lambda2(&dense_laplacian(n, &edges));
        let dmax = g.max_degree();
        if !(l2 / 2.0 <= phi + slack && phi <= (2.0 * dmax * l2).sqrt() + slack) {
            violations[0] += 1;
        }
    }
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let edges = random_connected(&mut rng, n, 0.2);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let Ok(bound) = spectral::test_vector_bound(&laplacian(&graph(n, &edges)), &u) else { continue };
        if bound < lambda2(&dense_laplacian(n, &edges)) - slack {
            violations[1] += 1;
        }
    }
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let l = dense_laplacian(n, &random_connected(&mut rng, n, 0.3));
        let mut h = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
        h = (&h + h.transpose()) * 0.5;
        let bound = spectral::weyl_change_bound(&h).unwrap();
        let (a, _) = eig(&l);
        let (b, _) = eig(&(&l + &h));
        if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > bound + slack) {
            violations[2] += 1;
        }
    }
    for _ in 0..100 {
        let n = rng.random_range(3..=20);
        let edges = random_connected(&mut rng, n, 0.3);
        let k = rng.random_range(0..edges.len());
        let mut fewer = edges.clone();
        fewer.remove(k);
        let full = lambda2(&dense_laplacian(n, &edges));
        let removed = lambda2(&dense_laplacian(n, &fewer));
        // the library's edge removal must agree with the oracle
        let lib = spectral::dense_eigenpairs(&laplacian(&graph(n, &edges).without_edge(k)))[1].0;
        if removed > full + slack || (lib - removed).abs() > 1e-9 {
            violations[3] += 1;
        }
    }
    for _ in 0..100 {
        let n = rng.random_range(3..=20);
        let a = random_connected(&mut rng, n, 0.3);
        let b: Vec<_> = a.iter().map(|&(x, y, _)| (x, y, rng.random_range(0.0..2.0))).collect();
        let t = rng.random::<f64>();
        let mix: Vec<_> = a.iter().zip(&b).map(|(p, q)| (p.0, p.1, t * p.2 + (1.0 - t) * q.2)).collect();
        let lhs = lambda2(&dense_laplacian(n, &mix));
        let rhs = t * lambda2(&dense_laplacian(n, &a)) + (1.0 - t) * lambda2(&dense_laplacian(n, &b));
        if lhs < rhs - slack {
            violations[4] += 1;
        }
    }
    outcome(
        violations.iter().all(|&v| v == 0),
        format!(
            "violations: cheeger {}, test-vector {}, weyl {}, edge-removal {}, concavity {} (100 samples each)",
            violations[0], violations[1], violations[2], violations[3], violations[4]
        ),
    )
}

// ---------- criterion 4 ----------

fn bound_calculators() -> Outcome {
    let mut fails = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    };
    let base = |c: f64, d: f64, n: f64| c * (2.0 * (2.0 * d).ln() / n).sqrt();
    let lin = bounds::linear_class_bound(1.0, 1.0, 2, 8, None).unwrap();
    check("linear", lin, base(1.0, 2.0, 8.0));
    check("linear rounded", (lin * 1e6).round() / 1e6, 0.588705);
    check("weighted linear", bounds::linear_class_bound(1.0, 1.0, 2, 8, Some(&[2.0, 2.0])).unwrap(), base(1.0, 2.0, 8.0) / 2.0);
    check("zero budget", bounds::linear_class_bound(0.0, 1.0, 2, 8, None).unwrap(), 0.0);

    let two = BoundInputs {
        gamma: 1.0,
        budgets: vec![1.0, 1.0],
        weightings: vec![vec![1.0, 1.0], vec![1.0; 4]],
        input_bound: 1.0,
        input_dim: 2,
        samples: 8,
        confidence: 0.05,
    };
    check("two layers", bounds::network_rademacher_bound(&two).unwrap(), 2.0 * base(1.0, 2.0, 8.0));
    check("two layers rounded", (bounds::network_rademacher_bound(&two).unwrap() * 1e6).round() / 1e6, 1.177410);

    // weighting from u = (0, 0.5, 1) on a 2 -> 1 net is (1, 0.25)
    let c = bounds::weighting_vectors(&bounds::u_matrix(&[0.0, 0.5, 1.0]).unwrap(), &[2, 1]).unwrap();
    let fied = BoundInputs { budgets: vec![1.0], weightings: c, ..two.clone() };
    check("fiedler one layer", bounds::network_rademacher_bound(&fied).unwrap(), 4.0 * base(1.0, 2.0, 8.0));
    // [1, 1, 1] with u = (0, 1, 3): c^0 = (1), c^1 = (4); B = (2, 2), d = 1
    let c3 = bounds::weighting_vectors(&bounds::u_matrix(&[0.0, 1.0, 3.0]).unwrap(), &[1, 1, 1]).unwrap();
    let deep = BoundInputs { budgets: vec![2.0, 2.0], weightings: c3, input_dim: 1, ..two.clone() };
    check("fiedler two layers", bounds::network_rademacher_bound(&deep).unwrap(), 2.0 * 2.0 * 0.5 * base(1.0, 1.0, 8.0));

    let gen = BoundInputs { samples: 50, confidence: (-1f64).exp(), ..two.clone() };
    check("generalization", bounds::generalization_bound(&gen, 0.0).unwrap(), 0.1);
    let r = bounds::network_rademacher_bound(&gen).unwrap();
    check("generalization with R", bounds::generalization_bound(&gen, r).unwrap(), 2.0 * r + 0.1);

    // Monte-Carlo vs closed form on tiny linear classes
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mc_fail = 0;
    for k in 0..20 {
        let d = rng.random_range(2..=4);
        let n = rng.random_range(5..=20);
        let budget = rng.random_range(0.5..2.0);
        let bound_c = rng.random_range(0.5..1.5);
        let points = Array2::from_shape_fn((n, d), |_| rng.random_range(-bound_c..bound_c));
        // vertices of the L1 ball plus random interior points
        let mut ws: Vec<Vec<f64>> = Vec::new();
        for i in 0..d {
            for s in [-1.0, 1.0] {
                let mut w = vec![0.0; d];
                w[i] = s * budget;
                ws.push(w);
            }
        }
        for _ in 0..30 {
            let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm: f64 = raw.iter().map(|x: &f64| x.abs()).sum();
            let scale = budget * rng.random::<f64>() / norm;
            ws.push(raw.iter().map(|x| x * scale).collect());
        }
        let outputs = Array2::from_shape_fn((ws.len(), n), |(h, i)| {
            ws[h].iter().enumerate().map(|(j, w)| w * points[[i, j]]).sum()
        });
        let est = bounds::empirical_rademacher_mc(&outputs, 2000, k).unwrap();
        let closed = bounds::linear_class_bound(budget, bound_c, d, n, None).unwrap();
        if est.estimate > closed + 3.0 * est.std_error {
            mc_fail += 1;
        }
    }
    let pass = fails.is_empty() && mc_fail == 0;
    let mut detail = format!("10 closed-form values, MC exceedances {mc_fail}/20");
    if !fails.is_empty() {
        detail.push_str(&format!("; mismatches: {}", fails.join("; ")));
    }
    outcome(pass, detail)
}

// ---------- criterion 5 ----------

fn synthetic_behavior() -> Outcome {
    let start = Instant::now();
    let data = two_gaussians(&SyntheticSpec { dim: 20, count: 500, separation: 1.5, seed: 3 }).unwrap();
    let mut below = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let base = TrainConfig { epochs: 30, seed, ..TrainConfig::default() };
        let fiedler = TrainConfig { regularizer: Regularizer::with_default_coeff("fiedler").unwrap(), ..base.clone() };
        let model = || init_model(&[20, 32, 32, 2], Activation::Relu, true, seed).unwrap();
        let (_, plain) = trainer::train(model(), &data, None, &base).unwrap();
        let (_, reg) = trainer::train(model(), &data, None, &fiedler).unwrap();
        let (p, f) = (plain.final_lambda2.unwrap(), reg.final_lambda2.unwrap());
        if f < p {
            below += 1;
        }
        pairs.push(format!("{f:.5}<{p:.5}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        below >= 4 && secs < 300.0,
        format!("Fiedler final lambda2 below unregularized in {below}/5 seeds [{}], {secs:.1}s", pairs.join(", ")),
    )
}

// ---------- criterion 6 ----------

fn mnist_dir() -> PathBuf {
    std::env::var_os("FIEDLER_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist_desk_scale() -> Option<Outcome> {
    let dir = mnist_dir();
    let file = |name: &str| dir.join(name);
    if !file("train-images-idx3-ubyte").exists() || !file("t10k-images-idx3-ubyte").exists() {
        return None;
    }
    let start = Instant::now();
    let regularizers = ["l1", "weight_decay", "dropout", "fiedler"]
        .iter()
        .map(|n| Regularizer::with_default_coeff(n).unwrap())
        .collect();
    let spec = ExperimentSpec {
        name: "MNIST desk scale".into(),
        data: DataSpec {
            source: DataSource::Idx {
                images: file("train-images-idx3-ubyte"),
                labels: file("train-labels-idx1-ubyte"),
                limit: Some(10_000),
            },
            test: Some(DataSource::Idx {
                images: file("t10k-images-idx3-ubyte"),
                labels: file("t10k-labels-idx1-ubyte"),
                limit: None,
            }),
            train_fraction: 0.8,
            split_seed: 0,
            normalization: Normalization::None,
        },
        hidden_layers: vec![128, 128],
        activation: Activation::Relu,
        biases: true,
        regularizers,
        seeds: vec![0, 1, 2],
        epochs: 5,
        batch_size: 100,
        learning_rate: 0.001,
        momentum: 0.9,
        refresh_period: 100,
        eigen_tol: 1e-8,
        track_connectivity: true,
        output_dir: None,
    };
    let (train, test) = spec.data.load().unwrap();
    let out = experiment::run_on(&spec, &train, &test).unwrap();
    let report = &out.report;
    print!("{}", report.to_table());

    let median = |label: &str| report.row(label).and_then(|r| r.test_accuracy).map(|s| s.median);
    let labels = ["L1", "Weight Decay", "Dropout", "Fiedler"];
    let all_above = labels.iter().all(|l| median(l).is_some_and(|m| m >= 0.85));
    let ordering = matches!((median("Fiedler"), median("L1")), (Some(f), Some(l)) if f >= l);

    // determinism: repeat one run and compare with the recorded one
    let fiedler = Regularizer::with_default_coeff("fiedler").unwrap();
    let again = experiment::run_on(&ExperimentSpec { regularizers: vec![fiedler], seeds: vec![1], ..spec.clone() }, &train, &test)
        .unwrap();
    let first = report.runs.iter().find(|r| r.regularizer == fiedler && r.seed == 1).unwrap();
    let deterministic = &again.report.runs[0] == first;

    let secs = start.elapsed().as_secs_f64();
    let medians: Vec<String> = labels
        .iter()
        .map(|l| format!("{l} {:.2}%", 100.0 * median(l).unwrap_or(f64::NAN)))
        .collect();
    Some(outcome(
        all_above && ordering && deterministic && secs < 900.0,
        format!(
            "median test accuracy [{}]; (a) all >= 85%: {all_above}; (b) Fiedler >= L1: {ordering}; (c) deterministic: {deterministic}; {secs:.0}s",
            medians.join(", ")
        ),
    ))
}

// ---------- criterion 7 ----------

fn delta_zero_equivalence() -> Outcome {
    let data = two_gaussians(&SyntheticSpec { dim: 20, count: 500, separation: 1.5, seed: 7 }).unwrap();
    let mut identical = 0;
    let cases = [(0u64, 1usize), (1, 7), (2, 100)];
    for &(seed, period) in &cases {
        let base = TrainConfig { epochs: 5, seed, refresh_period: period, batch_size: 50, ..TrainConfig::default() };
        let zero = TrainConfig {
            regularizer: Regularizer::Fiedler { delta: 0.0, mode: PenaltyMode::Variational },
            ..base.clone()
        };
        let model = || init_model(&[20, 32, 32, 2], Activation::Relu, true, seed).unwrap();
        let (a, ra) = trainer::train(model(), &data, Some(&data), &base).unwrap();
        let (b, rb) = trainer::train(model(), &data, Some(&data), &zero).unwrap();
        let bits = |m: &MlpModel| -> Vec<u64> {
            let mut v: Vec<u64> = m.weights().iter().flat_map(|w| w.iter().map(|x| x.to_bits())).collect();
            v.extend(m.biases().unwrap().iter().flat_map(|b| b.iter().map(|x| x.to_bits())));
            v
        };
        if bits(&a) == bits(&b) && ra.epochs == rb.epochs && ra.lambda2_history == rb.lambda2_history {
            identical += 1;
        }
    }
    outcome(
        identical == cases.len(),
        format!("{identical}/{} (seed, refresh period) cases bit-identical", cases.len()),
    )
}

// ---------- criterion 8 ----------

fn penalty_edge_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut total_edges = 0;
    for k in 0..50u64 {
        let depth = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=30)).collect();
        let mut model = init_model(&dims, Activation::Relu, true, k).unwrap();
        // prune some weights to exact zero
        for w in model.weights_mut() {
            w.mapv_inplace(|x| if rng.random::<f64>() < 0.2 { 0.0 } else { x });
        }
        let edges = build_graph(&model, false).unwrap().edges().len();
        total_edges += edges;
        let u: Vec<f64> = (0..model.num_units()).map(|i| (i as f64 * 0.37).sin()).collect();
        let Ok(state) = PenaltyState::new(&u, 100, 0.01, PenaltyMode::Variational) else { continue };
        if fiedler_penalty(&model, &state).unwrap().edges_visited != edges {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("50 models, {total_edges} edges in total, {mismatches} count mismatches"))
}

type Criterion = fn() -> Option<Outcome>;

fn main() {
    // the libtest harness passes flags such as --nocapture; they do not apply here
    let criteria: [(&str, Criterion); 8] = [
        ("1 spectral correctness", || Some(spectral_correctness())),
        ("2 gradient oracles", || Some(gradient_oracles())),
        ("3 inequality suite", || Some(inequality_suite())),
        ("4 bound calculators", || Some(bound_calculators())),
        ("5 synthetic lambda2 behavior", || Some(synthetic_behavior())),
        ("6 MNIST desk scale", mnist_desk_scale),
        ("7 delta=0 equivalence", || Some(delta_zero_equivalence())),
        ("8 penalty edge count", || Some(penalty_edge_count())),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let total = Instant::now();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Some(o) => {
                println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += usize::from(!o.pass);
            }
            None => println!(
                "[SKIP] criterion {name}: MNIST IDX files not found in {} (set FIEDLER_MNIST_DIR)",
                mnist_dir().display()
            ),
        }
    }
    println!("acceptance finished in {:.1?}", Duration::from_secs_f64(total.elapsed().as_secs_f64()));
    if failed > 0 {
        std::process::exit(1);
    }
}
