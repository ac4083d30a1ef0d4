//! Brute-force reference implementations and fixture generators shared by
//! the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zsml::regression::{loss_and_gradients, JointModel, RegressionModel, TargetMatrix};
use zsml::wordspace::{build_power_set, EmbeddingTable};
use zsml::zsl::{build_knn_graph, dmp_predict, exdap_predict, tramp_predict, Distance, GraphOptions, KnnGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vocab(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("l{i}")).collect()
}

pub fn table(rows: &DMatrix<f64>) -> EmbeddingTable {
    let entries = (0..rows.nrows())
        .map(|i| (format!("l{i}"), rows.row(i).iter().copied().collect()))
        .collect();
    EmbeddingTable::new(rows.ncols(), entries).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Sum of the embedding rows selected by `mask`.
pub fn subset_sum(e: &DMatrix<f64>, mask: u64) -> DVector<f64> {
    let mut v = DVector::zeros(e.ncols());
    for l in 0..e.nrows() {
        if mask >> l & 1 == 1 {
            v += e.row(l).transpose();
        }
    }
    v
}

/// `1 - a.b / sqrt(|a|^2 |b|^2)`, clamped to `[0, 2]`, with sequential sums.
pub fn cosine_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0)
}

/// Exhaustive nearest-prototype scan over all nonempty subsets, with ties
/// broken by smaller subset, then smaller mask.
pub fn dmp_brute_force(e: &DMatrix<f64>, y: &DVector<f64>) -> u64 {
    let m = e.nrows();
    let mut best: Option<(f64, u32, u64)> = None;
    for mask in 1u64..(1 << m) {
        let d = cosine_distance(y, &subset_sum(e, mask));
        let key = (d, mask.count_ones(), mask);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    best.unwrap().2
}

/// Least-squares label scores `argmin_s |E^T s - y|` by QR, one row per instance.
pub fn least_squares_scores(e: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = e.transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = DMatrix::zeros(y_hat.nrows(), e.nrows());
    for i in 0..y_hat.nrows() {
        let rhs = q.transpose() * y_hat.row(i).transpose();
        let s = r.solve_upper_triangular(&rhs).expect("full rank");
        out.set_row(i, &s.transpose());
    }
    out
}

/// Clamped iterative label propagation on a dense row-stochastic graph:
/// prototype rows stay fixed at their label vectors and test rows repeatedly
/// take the weighted average of their neighbors.
pub fn iterative_propagation(graph: &KnnGraph, labels: &DMatrix<u8>) -> DMatrix<f64> {
    let w = graph.to_dense();
    let (n_test, m) = (graph.n_test(), labels.ncols());
    let mut f = DMatrix::<f64>::zeros(graph.node_count(), m);
    for p in 0..graph.n_prototypes() {
        for c in 0..m {
            f[(n_test + p, c)] = f64::from(labels[(p, c)]);
        }
    }
    for _ in 0..1_000_000 {
        let next = &w * &f;
        let mut delta: f64 = 0.0;
        for i in 0..n_test {
            for c in 0..m {
                delta = delta.max((next[(i, c)] - f[(i, c)]).abs());
                f[(i, c)] = next[(i, c)];
            }
        }
        if delta < 1e-15 {
            break;
        }
    }
    f.rows(0, n_test).into_owned()
}

/// Whether every test node has a directed path to some prototype node.
pub fn all_test_nodes_reach_prototypes(graph: &KnnGraph) -> bool {
    let w = graph.to_dense();
    let n_test = graph.n_test();
    (0..n_test).all(|start| {
        let mut seen = vec![false; graph.node_count()];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            if i >= n_test {
                return true;
            }
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            stack.extend((0..graph.node_count()).filter(|&j| w[(i, j)] > 0.0 && !seen[j]));
        }
        false
    })
}

/// Projected test rows that are noisy sums of random label subsets.
pub fn noisy_subset_sums(rng: &mut ChaCha8Rng, e: &DMatrix<f64>, n: usize, noise: f64) -> TargetMatrix {
    let m = e.nrows();
    let mut y = DMatrix::zeros(n, e.ncols());
    for i in 0..n {
        let mask = rng.random_range(1u64..(1 << m));
        let v = subset_sum(e, mask);
        for c in 0..e.ncols() {
            y[(i, c)] = v[c] + noise * rng.random_range(-1.0..1.0);
        }
    }
    TargetMatrix::new(y).unwrap()
}

/// Objective of the hidden-ReLU regressor written out with scalar loops:
/// mean squared error over all output entries plus `l2 / 2` times the squared
/// weight norms.
pub fn scalar_objective(m: &JointModel, x: &DMatrix<f64>, y: &DMatrix<f64>, l2: f64) -> f64 {
    let (n, d_in) = x.shape();
    let (h, d_out) = m.w2.shape();
    let mut sse = 0.0;
    for i in 0..n {
        let mut hidden = vec![0.0; h];
        for (u, hu) in hidden.iter_mut().enumerate() {
            let mut z = m.b1[u];
            for a in 0..d_in {
                z += x[(i, a)] * m.w1[(a, u)];
            }
            *hu = z.max(0.0);
        }
        for o in 0..d_out {
            let mut out = m.b2[o];
            for (u, hu) in hidden.iter().enumerate() {
                out += hu * m.w2[(u, o)];
            }
            sse += (out - y[(i, o)]).powi(2);
        }
    }
    let penalty = m.w1.iter().chain(m.w2.iter()).map(|w| w * w).sum::<f64>();
    sse / (n * d_out) as f64 + 0.5 * l2 * penalty
}

/// Central finite differences of [`scalar_objective`], in the block order
/// `w1, b1, w2, b2` with column-major entries.
pub fn finite_difference_gradient(
    m: &JointModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    l2: f64,
    eps: f64,
) -> Vec<Vec<f64>> {
    fn entry(w: &mut JointModel, block: usize, k: usize) -> &mut f64 {
        match block {
            0 => &mut w.w1.as_mut_slice()[k],
            1 => &mut w.b1.as_mut_slice()[k],
            2 => &mut w.w2.as_mut_slice()[k],
            _ => &mut w.b2.as_mut_slice()[k],
        }
    }
    let mut work = m.clone();
    let lens = [m.w1.len(), m.b1.len(), m.w2.len(), m.b2.len()];
    let mut blocks = Vec::new();
    for (block, &len) in lens.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for k in 0..len {
            let orig = *entry(&mut work, block, k);
            *entry(&mut work, block, k) = orig + eps;
            let plus = scalar_objective(&work, x, y, l2);
            *entry(&mut work, block, k) = orig - eps;
            let minus = scalar_objective(&work, x, y, l2);
            *entry(&mut work, block, k) = orig;
            g.push((plus - minus) / (2.0 * eps));
        }
        blocks.push(g);
    }
    blocks
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

pub fn random_joint(rng: &mut ChaCha8Rng, d_in: usize, h: usize, d_out: usize) -> JointModel {
    JointModel {
        w1: random_matrix(rng, d_in, h),
        b1: DVector::from_fn(h, |_, _| rng.random_range(-0.5..0.5)),
        w2: random_matrix(rng, h, d_out),
        b2: DVector::from_fn(d_out, |_, _| rng.random_range(-0.5..0.5)),
    }
}

/// Dense kNN weights recomputed from scratch: cosine distances over
/// `[test rows, prototype rows]`, bandwidth `sigma^2` = median squared
/// distance over unordered pairs, `k` nearest other nodes (lower index on
/// ties), Gaussian weights normalized per row.
pub fn dense_knn_weights(nodes: &[DVector<f64>], k: usize) -> DMatrix<f64> {
    let n = nodes.len();
    let d = DMatrix::from_fn(n, n, |i, j| cosine_distance(&nodes[i], &nodes[j]));
    let mut sq: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| d[(i, j)] * d[(i, j)])
        .collect();
    sq.sort_by(f64::total_cmp);
    let mid = sq.len() / 2;
    let sigma2 = if sq.len() % 2 == 1 { sq[mid] } else { 0.5 * (sq[mid - 1] + sq[mid]) };
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
        order.truncate(k);
        let raw: Vec<f64> = order.iter().map(|&j| (-d[(i, j)].powi(2) / (2.0 * sigma2)).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (&j, r) in order.iter().zip(raw) {
            w[(i, j)] = r / z;
        }
    }
    w
}

pub struct TrampCheck {
    pub fixtures: usize,
    pub skipped_unreachable: usize,
    pub max_error: f64,
}

/// Compares the closed-form propagation with iterative propagation on random
/// fixtures (n_T <= 30, m_T <= 4) until `wanted` usable fixtures are seen.
pub fn check_tramp(wanted: usize, seed: u64) -> TrampCheck {
    let mut rng = rng(seed);
    let (mut fixtures, mut skipped, mut max_error) = (0, 0, 0.0f64);
    while fixtures < wanted {
        let m = rng.random_range(2..=4);
        let dim = rng.random_range(3..=6);
        let n = rng.random_range(5..=30);
        let e = random_matrix(&mut rng, m, dim);
        let protos = build_power_set(&table(&e), &vocab(m)).unwrap();
        let y = noisy_subset_sums(&mut rng, &e, n, 0.2);
        let k = rng.random_range(2..=5);
        let graph = build_knn_graph(&y, &protos, &GraphOptions::new(k)).unwrap();
        if !all_test_nodes_reach_prototypes(&graph) {
            skipped += 1;
            continue;
        }
        let closed = tramp_predict(&graph, protos.label_matrix(), 0.5).unwrap();
        let iterative = iterative_propagation(&graph, protos.label_matrix());
        max_error = max_error.max((&closed.scores - iterative).amax());
        fixtures += 1;
    }
    TrampCheck {
        fixtures,
        skipped_unreachable: skipped,
        max_error,
    }
}

pub struct DmpCheck {
    pub fixtures: usize,
    pub instances: usize,
    pub tie_instances: usize,
    pub mismatches: usize,
}

/// Small-integer embeddings with collinear labels and instances that are
/// exact multiples of prototypes, so several prototypes share the minimum
/// distance.
fn tie_fixture(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = rng.random_range(2..=4);
    let dim = rng.random_range(2..=4);
    let mut e = DMatrix::from_fn(m, dim, |_, _| f64::from(rng.random_range(-2i32..=2)));
    for l in 0..m {
        if e.row(l).iter().all(|&v| v == 0.0) {
            e[(l, 0)] = 1.0;
        }
    }
    // make one label a multiple of another
    let (a, b) = (0, 1 + rng.random_range(0..m - 1));
    let c = f64::from(rng.random_range(1i32..=2));
    let row = e.row(a) * c;
    e.set_row(b, &row);
    let n = rng.random_range(3..=10);
    let y = DMatrix::from_fn(n, dim, |_, _| 0.0);
    let mut y = y;
    for i in 0..n {
        let mut v = DVector::zeros(dim);
        while v.iter().all(|&x| x == 0.0) {
            let mask = rng.random_range(1u64..(1 << m));
            v = subset_sum(&e, mask) * f64::from(rng.random_range(1i32..=3));
        }
        y.set_row(i, &v.transpose());
    }
    (e, y)
}

/// Compares nearest-prototype assignment with an exhaustive scan on `count`
/// fixtures, half of them built to contain exact distance ties.
pub fn check_dmp(count: usize, seed: u64) -> DmpCheck {
    let mut rng = rng(seed);
    let mut out = DmpCheck {
        fixtures: 0,
        instances: 0,
        tie_instances: 0,
        mismatches: 0,
    };
    while out.fixtures < count {
        let (e, y) = if out.fixtures.is_multiple_of(2) {
            let m = rng.random_range(2..=5);
            let dim = rng.random_range(2..=6);
            let e = random_matrix(&mut rng, m, dim);
            let n = rng.random_range(1..=20);
            let y = noisy_subset_sums(&mut rng, &e, n, 0.3).into_inner();
            (e, y)
        } else {
            tie_fixture(&mut rng)
        };
        let m = e.nrows();
        let Ok(protos) = build_power_set(&table(&e), &vocab(m)) else {
            // a label subset cancelled to zero; draw again
            continue;
        };
        let pred = dmp_predict(&TargetMatrix::new(y.clone()).unwrap(), &protos, Distance::Cosine).unwrap();
        let chosen = pred.chosen.unwrap();
        for (i, got) in chosen.iter().enumerate() {
            let yi = y.row(i).transpose();
            let expected = dmp_brute_force(&e, &yi);
            let best = cosine_distance(&yi, &subset_sum(&e, expected));
            let ties = (1u64..(1 << m))
                .filter(|&mask| cosine_distance(&yi, &subset_sum(&e, mask)) == best)
                .count();
            if ties > 1 {
                out.tie_instances += 1;
            }
            let got = got.map(|row| protos.mask(row));
            if got != Some(expected) {
                out.mismatches += 1;
            }
            let expected_labels: Vec<u8> = (0..m).map(|l| (expected >> l & 1) as u8).collect();
            if pred.binary.row(i).iter().copied().collect::<Vec<_>>() != expected_labels {
                out.mismatches += 1;
            }
            out.instances += 1;
        }
        out.fixtures += 1;
    }
    out
}

pub struct ExdapCheck {
    pub fixtures: usize,
    pub max_score_error: f64,
    pub max_recovery_error: f64,
}

/// exDAP scores against a QR least-squares solve on well-conditioned random
/// embeddings, and recovery of exact subset sums.
pub fn check_exdap(count: usize, seed: u64) -> ExdapCheck {
    let mut rng = rng(seed);
    let mut out = ExdapCheck {
        fixtures: 0,
        max_score_error: 0.0,
        max_recovery_error: 0.0,
    };
    while out.fixtures < count {
        let m = rng.random_range(2..=6);
        let dim = rng.random_range(m..=m + 8);
        let e = random_matrix(&mut rng, m, dim);
        let sv = e.clone().svd(false, false).singular_values;
        if sv.max() / sv.min() > 100.0 {
            continue;
        }
        let n = rng.random_range(1..=15);
        let y = random_matrix(&mut rng, n, dim);
        let got = exdap_predict(&TargetMatrix::new(y.clone()).unwrap(), &e, 0.5).unwrap();
        let want = least_squares_scores(&e, &y);
        out.max_score_error = out.max_score_error.max((&got.scores - want).amax());

        let masks: Vec<u64> = (0..n).map(|_| rng.random_range(1u64..(1 << m))).collect();
        let exact = DMatrix::from_fn(n, dim, |i, c| subset_sum(&e, masks[i])[c]);
        let got = exdap_predict(&TargetMatrix::new(exact).unwrap(), &e, 0.5).unwrap();
        for (i, &mask) in masks.iter().enumerate() {
            for l in 0..m {
                let bit = f64::from((mask >> l & 1) as u8);
                out.max_recovery_error = out.max_recovery_error.max((got.scores[(i, l)] - bit).abs());
                assert_eq!(got.binary[(i, l)], bit as u8);
            }
        }
        out.fixtures += 1;
    }
    out
}

/// Worst relative error between analytic and finite-difference gradients of
/// the joint regressor over `seeds`.
pub fn check_gradients(seeds: std::ops::Range<u64>, eps: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let mut rng = rng(1000 + seed);
        let (n, d_in, h, d_out) = (
            rng.random_range(3..=12),
            rng.random_range(2..=6),
            rng.random_range(3..=10),
            rng.random_range(1..=5),
        );
        let model = random_joint(&mut rng, d_in, h, d_out);
        let x = random_matrix(&mut rng, n, d_in);
        let y = random_matrix(&mut rng, n, d_out);
        let l2 = rng.random_range(0.0..0.1);
        let numeric = finite_difference_gradient(&model, &x, &y, l2, eps);
        let wrapped = RegressionModel::Joint(model);
        let (loss, analytic) = loss_and_gradients(&wrapped, &x, &y, l2).unwrap();
        let RegressionModel::Joint(model) = &wrapped else { unreachable!() };
        assert!((loss - scalar_objective(model, &x, &y, l2)).abs() < 1e-12 * loss.max(1.0));
        for (a, b) in analytic.blocks.iter().zip(&numeric) {
            assert_eq!(a.len(), b.len());
            for (&ga, &gn) in a.iter().zip(b) {
                worst = worst.max(relative_error(ga, gn));
            }
        }
    }
    worst
}
