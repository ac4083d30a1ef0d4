use nalgebra::{Cholesky, DMatrix, DVector};

use super::{FeatureMatrix, LinearModel, RegressionModel, TargetMatrix};
use crate::error::{Result, ZsmlError};

/// Closed-form ridge regression, solved jointly for all output columns but
/// with no coupling between them: each column is the single-output ridge fit.
///
/// An intercept column is appended and left unpenalized.
pub fn train_independent(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    l2_penalty: f64,
) -> Result<RegressionModel> {
    if x.rows() != y.rows() {
        return Err(ZsmlError::Shape(format!(
            "{} feature rows but {} target rows",
            x.rows(),
            y.rows()
        )));
    }
    if !(l2_penalty >= 0.0 && l2_penalty.is_finite()) {
        return Err(ZsmlError::Validation(
            "l2 penalty must be non-negative and finite".into(),
        ));
    }
    let (n, p) = (x.rows(), x.cols());
    let xa = DMatrix::from_fn(n, p + 1, |r, c| {
        if c < p {
            x.as_matrix()[(r, c)]
        } else {
            1.0
        }
    });
    let mut gram = xa.transpose() * &xa;
    for i in 0..p {
        gram[(i, i)] += l2_penalty;
    }
    let rhs = xa.transpose() * y.as_matrix();

    let singular = || {
        ZsmlError::Singular(
            "normal equations are singular; use a positive l2 penalty".into(),
        )
    };
    let chol = Cholesky::new(gram).ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // Squared ratio of Cholesky pivots bounds the reciprocal condition number.
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(singular());
    }
    let coef = chol.solve(&rhs);
    let w = coef.rows(0, p).into_owned();
    let b = DVector::from_iterator(coef.ncols(), coef.row(p).iter().copied());
    Ok(RegressionModel::Independent(LinearModel { w, b }))
}
