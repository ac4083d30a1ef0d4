use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, ZsmlError};
use crate::regression::TargetMatrix;
use crate::wordspace::{cosine_from_parts, dot, euclidean_distance, rows_of, Distance, PrototypeSet};

/// One step of self-training: every prototype moves to the mean of its `k`
/// nearest projected test instances. Label rows are unchanged and the result
/// is marked refined.
///
/// Under cosine distance, zero projections have no direction and are never
/// chosen as neighbors.
pub fn self_train_prototypes(
    prototypes: &PrototypeSet,
    y_hat: &TargetMatrix,
    k: usize,
    distance: Distance,
) -> Result<PrototypeSet> {
    let n = y_hat.rows();
    if k == 0 {
        return Err(ZsmlError::Validation("self-training k must be positive".into()));
    }
    if k > n {
        return Err(ZsmlError::Validation(format!(
            "self-training k = {k} exceeds the {n} test instances"
        )));
    }
    if y_hat.cols() != prototypes.dim() {
        return Err(ZsmlError::Shape(format!(
            "predictions have dimension {}, prototypes have {}",
            y_hat.cols(),
            prototypes.dim()
        )));
    }
    let ys = rows_of(y_hat.as_matrix());
    let y_sq: Vec<f64> = ys.iter().map(|y| dot(y, y)).collect();
    let candidates: Vec<usize> = match distance {
        Distance::Cosine => (0..n).filter(|&i| y_sq[i] > 0.0).collect(),
        Distance::Euclidean => (0..n).collect(),
    };
    if k > candidates.len() {
        return Err(ZsmlError::Validation(format!(
            "self-training k = {k} exceeds the {} nonzero test projections",
            candidates.len()
        )));
    }
    let protos = rows_of(prototypes.prototypes());
    let dim = prototypes.dim();

    let refined: Vec<Vec<f64>> = protos
        .par_iter()
        .map(|p| {
            let pp = dot(p, p);
            let mut scored: Vec<(f64, usize)> = candidates
                .iter()
                .map(|&i| {
                    let d = match distance {
                        Distance::Cosine => cosine_from_parts(dot(p, &ys[i]), pp, y_sq[i]),
                        Distance::Euclidean => euclidean_distance(p, &ys[i]).unwrap_or(f64::INFINITY),
                    };
                    (d, i)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut mean = vec![0.0; dim];
            for &(_, i) in &scored[..k] {
                for (m, v) in mean.iter_mut().zip(&ys[i]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= k as f64);
            mean
        })
        .collect();

    let mut out = DMatrix::zeros(protos.len(), dim);
    for (j, row) in refined.iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(ZsmlError::Domain(format!(
                "refined prototype {j} (label mask {:#b}) is the zero vector",
                prototypes.mask(j)
            )));
        }
        for (c, v) in row.iter().enumerate() {
            out[(j, c)] = *v;
        }
    }
    Ok(prototypes.with_refined_rows(out))
}
