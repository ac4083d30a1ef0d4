use nalgebra::{DMatrix, SVD};

use super::{threshold_scores, Method, PredictionResult};
use crate::error::{Result, ZsmlError};
use crate::regression::TargetMatrix;

/// Condition number of the label Gram matrix above which a warning is emitted.
const CONDITION_WARNING: f64 = 1e8;

/// Decodes labels independently: `scores = (E E^T)^+ E y` for every projected
/// instance `y`, where the rows of `E` are the target label embeddings.
pub fn exdap_predict(
    y_hat: &TargetMatrix,
    label_embeddings: &DMatrix<f64>,
    threshold: f64,
) -> Result<PredictionResult> {
    let (m, dim) = label_embeddings.shape();
    if m == 0 {
        return Err(ZsmlError::Validation("no target labels".into()));
    }
    if dim != y_hat.cols() {
        return Err(ZsmlError::Shape(format!(
            "label embeddings have dimension {dim}, predictions have {}",
            y_hat.cols()
        )));
    }
    if let Some(r) = (0..m).find(|&r| label_embeddings.row(r).iter().all(|&v| v == 0.0)) {
        return Err(ZsmlError::Domain(format!(
            "label embedding row {r} is the zero vector"
        )));
    }

    let gram = label_embeddings * label_embeddings.transpose();
    let svd = SVD::new(gram, true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let mut diagnostics = Vec::new();
    if condition > CONDITION_WARNING {
        let msg = format!(
            "label embedding Gram matrix is ill-conditioned (condition number {condition:.3e}); scores use the pseudo-inverse"
        );
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let tol = s_max * m as f64 * f64::EPSILON;
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|e| ZsmlError::Singular(format!("pseudo-inverse failed: {e}")))?;

    // (n x d) * (d x m) * (m x m) is the row-wise form of (E E^T)^+ E Y^T.
    let scores = y_hat.as_matrix() * label_embeddings.transpose() * pinv.transpose();
    Ok(PredictionResult {
        method: Method::Exdap,
        binary: threshold_scores(&scores, threshold),
        scores,
        chosen: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_embeddings_read_off_coordinates() {
        let e = DMatrix::identity(2, 2);
        let y = TargetMatrix::from_rows(1, 2, &[0.9, 0.1]).unwrap();
        let r = exdap_predict(&y, &e, 0.5).unwrap();
        assert!((r.scores[(0, 0)] - 0.9).abs() < 1e-15);
        assert!((r.scores[(0, 1)] - 0.1).abs() < 1e-15);
        assert_eq!(r.binary.row(0).iter().copied().collect::<Vec<_>>(), vec![1, 0]);
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn exact_subset_sum_is_recovered() {
        let e = DMatrix::from_row_slice(3, 4, &[
            1.0, 0.5, 0.0, -0.3,
            0.2, 1.0, 0.4, 0.0,
            -0.5, 0.1, 1.0, 0.7,
        ]);
        let y: Vec<f64> = (0..4).map(|c| e[(0, c)] + e[(1, c)]).collect();
        let r = exdap_predict(&TargetMatrix::from_rows(1, 4, &y).unwrap(), &e, 0.5).unwrap();
        for (j, want) in [1.0, 1.0, 0.0].iter().enumerate() {
            assert!((r.scores[(0, j)] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_embeddings_warn_but_succeed() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let y = TargetMatrix::from_rows(1, 2, &[3.0, 3.0]).unwrap();
        let r = exdap_predict(&y, &e, 0.5).unwrap();
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.scores.iter().all(|v| v.is_finite()));
        // minimum-norm solution of l0 + 2 l1 = 3
        assert!((r.scores[(0, 0)] - 0.6).abs() < 1e-10);
        assert!((r.scores[(0, 1)] - 1.2).abs() < 1e-10);
    }

    #[test]
    fn rejects_zero_row_and_dimension_mismatch() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let y = TargetMatrix::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        assert!(matches!(exdap_predict(&y, &e, 0.5), Err(ZsmlError::Domain(_))));
        let y = TargetMatrix::from_rows(1, 3, &[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            exdap_predict(&y, &DMatrix::identity(2, 2), 0.5),
            Err(ZsmlError::Shape(_))
        ));
    }
}
