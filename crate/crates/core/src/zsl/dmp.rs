use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{Method, PredictionResult};
use crate::error::{Result, ZsmlError};
use crate::regression::TargetMatrix;
use crate::wordspace::{cosine_from_parts, dot, euclidean_distance, rows_of, Distance, PrototypeSet};

/// Nearest-prototype assignment.
///
/// Each instance receives the label set of the closest prototype. Ties are
/// broken by smaller label-set cardinality, then by lower bitmask. Per-label
/// scores are the best similarity (`1 - cosine distance`, or negative
/// Euclidean distance) among prototypes containing that label.
///
/// Instances projected to the zero vector get an empty label set, zero
/// scores, and a diagnostic.
pub fn dmp_predict(
    y_hat: &TargetMatrix,
    prototypes: &PrototypeSet,
    distance: Distance,
) -> Result<PredictionResult> {
    if y_hat.cols() != prototypes.dim() {
        return Err(ZsmlError::Shape(format!(
            "predictions have dimension {}, prototypes have {}",
            y_hat.cols(),
            prototypes.dim()
        )));
    }
    let m = prototypes.vocabulary().len();
    let protos = rows_of(prototypes.prototypes());
    let proto_sq: Vec<f64> = protos.iter().map(|p| dot(p, p)).collect();
    if let Some(j) = proto_sq.iter().position(|&s| s == 0.0) {
        return Err(ZsmlError::Domain(format!("prototype row {j} is the zero vector")));
    }
    let labels = prototypes.label_matrix();
    let ys = rows_of(y_hat.as_matrix());

    let per_instance: Vec<Option<(usize, Vec<f64>)>> = ys
        .par_iter()
        .map(|y| {
            let yy = dot(y, y);
            if yy == 0.0 && distance == Distance::Cosine {
                return None;
            }
            let dists: Vec<f64> = protos
                .iter()
                .zip(&proto_sq)
                .map(|(p, &pp)| match distance {
                    Distance::Cosine => cosine_from_parts(dot(y, p), yy, pp),
                    Distance::Euclidean => euclidean_distance(y, p).unwrap_or(f64::INFINITY),
                })
                .collect();
            let mut best = 0;
            for j in 1..dists.len() {
                let key = |k: usize| (dists[k], prototypes.cardinality(k), prototypes.mask(k));
                if key(j).partial_cmp(&key(best)) == Some(Ordering::Less) {
                    best = j;
                }
            }
            let mut scores = vec![f64::NEG_INFINITY; m];
            for (j, d) in dists.iter().enumerate() {
                let sim = match distance {
                    Distance::Cosine => 1.0 - d,
                    Distance::Euclidean => -d,
                };
                for (b, s) in scores.iter_mut().enumerate() {
                    if labels[(j, b)] == 1 && sim > *s {
                        *s = sim;
                    }
                }
            }
            Some((best, scores))
        })
        .collect();

    let n = ys.len();
    let mut scores = DMatrix::zeros(n, m);
    let mut binary = DMatrix::zeros(n, m);
    let mut chosen = Vec::with_capacity(n);
    let mut diagnostics = Vec::new();
    for (i, outcome) in per_instance.into_iter().enumerate() {
        match outcome {
            Some((best, s)) => {
                for b in 0..m {
                    scores[(i, b)] = s[b];
                    binary[(i, b)] = labels[(best, b)];
                }
                chosen.push(Some(best));
            }
            None => {
                diagnostics.push(format!(
                    "instance {i}: predicted vector is zero, cosine distance undefined; assigned the empty label set"
                ));
                chosen.push(None);
            }
        }
    }
    Ok(PredictionResult {
        method: Method::Dmp,
        scores,
        binary,
        chosen: Some(chosen),
        diagnostics,
    })
}
