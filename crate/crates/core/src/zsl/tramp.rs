use nalgebra::DMatrix;

use super::{threshold_scores, KnnGraph, Method, PredictionResult};
use crate::error::{Result, ZsmlError};

/// Diagonal shift applied when some test instances cannot reach a prototype.
const REGULARIZATION: f64 = 1e-10;

/// Test instances with a directed path to at least one prototype node.
fn reaches_prototype(graph: &KnnGraph) -> Vec<bool> {
    let n_test = graph.n_test();
    let mut reach = vec![false; n_test];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n_test {
            if reach[i] {
                continue;
            }
            if graph
                .row(i)
                .iter()
                .any(|&(j, w)| w > 0.0 && (j >= n_test || reach[j]))
            {
                reach[i] = true;
                changed = true;
            }
        }
    }
    reach
}

/// Closed-form label propagation from prototypes to test instances.
///
/// With `A = I - W` partitioned into test (`U`) and prototype (`L`) blocks,
/// the scores are `-A_UU^{-1} A_UL L_P`, i.e. the solution of
/// `(I - W_UU) F = W_UL L_P`. Scores are binarized at `threshold`.
pub fn tramp_predict(
    graph: &KnnGraph,
    label_matrix: &DMatrix<u8>,
    threshold: f64,
) -> Result<PredictionResult> {
    let (n_test, n_proto) = (graph.n_test(), graph.n_prototypes());
    if label_matrix.nrows() != n_proto {
        return Err(ZsmlError::Shape(format!(
            "label matrix has {} rows, graph has {n_proto} prototypes",
            label_matrix.nrows()
        )));
    }
    let m = label_matrix.ncols();
    let mut a_uu = DMatrix::<f64>::identity(n_test, n_test);
    let mut rhs = DMatrix::<f64>::zeros(n_test, m);
    for i in 0..n_test {
        for &(j, w) in graph.row(i) {
            if j < n_test {
                a_uu[(i, j)] -= w;
            } else {
                let p = j - n_test;
                for c in 0..m {
                    if label_matrix[(p, c)] == 1 {
                        rhs[(i, c)] += w;
                    }
                }
            }
        }
    }

    let mut diagnostics = Vec::new();
    let stranded = reaches_prototype(graph).iter().filter(|r| !**r).count();
    if stranded > 0 {
        for i in 0..n_test {
            a_uu[(i, i)] += REGULARIZATION;
        }
        let msg = format!(
            "{stranded} test instance(s) have no path to a prototype; A_UU regularized with {REGULARIZATION:e} I"
        );
        log::warn!("{msg}");
        diagnostics.push(msg);
    }

    let solved = a_uu.clone().lu().solve(&rhs).filter(|f| f.iter().all(|v| v.is_finite()));
    let scores = match solved {
        Some(f) => f,
        None => {
            let smallest = a_uu.singular_values().min();
            return Err(ZsmlError::Singular(format!(
                "A_UU is singular after regularization (smallest singular value {smallest:e})"
            )));
        }
    };
    Ok(PredictionResult {
        method: Method::Tramp,
        binary: threshold_scores(&scores, threshold),
        scores,
        chosen: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(rows: &[&[u8]]) -> DMatrix<u8> {
        DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
    }

    #[test]
    fn one_step_propagation_from_prototypes() {
        // 1 test node, 3 prototypes ({a}, {b}, {a,b})
        let lp = labels(&[&[1, 0], &[0, 1], &[1, 1]]);
        let g = KnnGraph::from_rows(
            1,
            3,
            3,
            1.0,
            vec![
                vec![(1, 0.5), (2, 0.3), (3, 0.2)],
                vec![(0, 1.0)],
                vec![(0, 1.0)],
                vec![(0, 1.0)],
            ],
        )
        .unwrap();
        let r = tramp_predict(&g, &lp, 0.5).unwrap();
        assert!((r.scores[(0, 0)] - 0.7).abs() < 1e-15);
        assert!((r.scores[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(r.binary.row(0).iter().copied().collect::<Vec<_>>(), vec![1, 1]);
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn delta_weight_on_singleton() {
        let lp = labels(&[&[1, 0, 0], &[0, 1, 0], &[1, 1, 0]]);
        let g = KnnGraph::from_rows(
            1,
            3,
            1,
            1.0,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let r = tramp_predict(&g, &lp, 0.5).unwrap();
        assert_eq!(r.scores.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert_eq!(r.binary.row(0).iter().copied().collect::<Vec<_>>(), vec![1, 0, 0]);
    }

    #[test]
    fn stranded_component_is_regularized() {
        // test nodes 0 and 1 only point at each other; node 2 points at the prototype.
        let lp = labels(&[&[1]]);
        let g = KnnGraph::from_rows(
            3,
            1,
            1,
            1.0,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(3, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let r = tramp_predict(&g, &lp, 0.5).unwrap();
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.scores[(0, 0)].abs() < 1e-12);
        assert!(r.scores[(1, 0)].abs() < 1e-12);
        assert!((r.scores[(2, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn label_matrix_must_match_graph() {
        let g = KnnGraph::from_rows(1, 1, 1, 1.0, vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert!(tramp_predict(&g, &labels(&[&[1], &[0]]), 0.5).is_err());
    }
}
