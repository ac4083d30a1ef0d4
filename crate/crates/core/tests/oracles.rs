mod common;

use common::*;
use nalgebra::DVector;
use zsml::wordspace::build_power_set;
use zsml::zsl::{build_knn_graph, tramp_predict, GraphOptions};

#[test]
fn tramp_closed_form_matches_iterative_propagation() {
    let check = check_tramp(25, 11);
    assert_eq!(check.fixtures, 25);
    assert!(check.max_error < 1e-8, "max error {:e}", check.max_error);
}

#[test]
fn dmp_matches_exhaustive_scan_including_ties() {
    let check = check_dmp(60, 12);
    assert!(check.instances > 300);
    assert!(check.tie_instances > 20, "only {} tied instances", check.tie_instances);
    assert_eq!(check.mismatches, 0);
}

#[test]
fn dmp_tie_prefers_fewer_labels_then_lower_mask() {
    // {l2} and {l0, l1} are the same vector
    let e = nalgebra::dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
    assert_eq!(dmp_brute_force(&e, &DVector::from_vec(vec![2.0, 2.0])), 0b100);
    // {l0}, {l1} and {l0, l1} are collinear
    let e = nalgebra::dmatrix![1.0, 0.0; 2.0, 0.0];
    assert_eq!(dmp_brute_force(&e, &DVector::from_vec(vec![5.0, 0.0])), 0b01);
}

#[test]
fn exdap_matches_least_squares() {
    let check = check_exdap(40, 13);
    assert!(check.max_score_error < 1e-8, "{:e}", check.max_score_error);
    assert!(check.max_recovery_error < 1e-8, "{:e}", check.max_recovery_error);
}

#[test]
fn knn_graph_matches_dense_recomputation() {
    let mut rng = rng(14);
    for _ in 0..20 {
        let m = 3;
        let e = random_matrix(&mut rng, m, 4);
        let protos = build_power_set(&table(&e), &vocab(m)).unwrap();
        let y = noisy_subset_sums(&mut rng, &e, 12, 0.3);
        for k in [1, 3, 6] {
            let graph = build_knn_graph(&y, &protos, &GraphOptions::new(k)).unwrap();
            let nodes: Vec<DVector<f64>> = (0..y.rows())
                .map(|i| y.as_matrix().row(i).transpose())
                .chain((0..protos.len()).map(|p| protos.prototypes().row(p).transpose()))
                .collect();
            let want = dense_knn_weights(&nodes, k);
            let got = graph.to_dense();
            assert!((got - want).amax() < 1e-12);
        }
    }
}

#[test]
fn unreachable_test_nodes_still_get_finite_scores() {
    // two far-apart clusters of test points that only point at each other
    let e = nalgebra::dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
    let protos = build_power_set(&table(&e), &vocab(2)).unwrap();
    let y = zsml::regression::TargetMatrix::new(nalgebra::dmatrix![
        0.0, 0.0, 1.0;
        0.0, 0.01, 1.0;
        1.0, 0.1, 0.0
    ])
    .unwrap();
    let graph = build_knn_graph(&y, &protos, &GraphOptions::new(1)).unwrap();
    assert!(!all_test_nodes_reach_prototypes(&graph));
    let pred = tramp_predict(&graph, protos.label_matrix(), 0.5).unwrap();
    assert!(pred.scores.iter().all(|v| v.is_finite()));
    assert!(!pred.diagnostics.is_empty());
}
