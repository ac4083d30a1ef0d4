//! Train, project, refine and predict: the steps shared by experiments and
//! the benchmark harness.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};
use crate::regression::{
    train_independent, train_joint, FeatureMatrix, RegressionModel, RegressorKind, TargetMatrix,
    TrainConfig,
};
use crate::wordspace::{build_power_set, EmbeddingTable, PrototypeSet};
use crate::zsl::{
    build_knn_graph, dmp_predict, exdap_predict, self_train_prototypes, tramp_predict, Method,
    PredictionResult, ZslOptions,
};

pub const DEFAULT_RIDGE_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    /// Used by the joint regressor.
    pub train: TrainConfig,
    /// Penalty on the squared weights of the independent (ridge) regressor.
    pub ridge_penalty: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kind: RegressorKind::Joint,
            train: TrainConfig::default(),
            ridge_penalty: DEFAULT_RIDGE_PENALTY,
        }
    }
}

/// Word-space regression targets: row `i` is the sum of the embeddings of
/// instance `i`'s labels.
pub fn label_sum_targets(
    table: &EmbeddingTable,
    vocabulary: &[String],
    labels: &DMatrix<u8>,
) -> Result<TargetMatrix> {
    if labels.ncols() != vocabulary.len() {
        return Err(ZsmlError::Shape(format!(
            "label matrix has {} columns, vocabulary has {} labels",
            labels.ncols(),
            vocabulary.len()
        )));
    }
    let e = table.matrix(vocabulary)?;
    TargetMatrix::new(labels.map(f64::from) * e)
}

pub fn fit_regressor(
    cfg: &RegressorConfig,
    x: &FeatureMatrix,
    y: &TargetMatrix,
) -> Result<RegressionModel> {
    match cfg.kind {
        RegressorKind::Joint => Ok(train_joint(x, y, &cfg.train)?.model),
        RegressorKind::Independent => train_independent(x, y, cfg.ridge_penalty),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZslOutcome {
    pub prediction: PredictionResult,
    /// Prototypes as used by the predictor, refined when self-training ran.
    pub prototypes: PrototypeSet,
}

/// Runs a zero-shot predictor on projected test instances.
///
/// With `selftrain`, prototypes are refined first. exDAP decodes against the
/// raw label embeddings and is unaffected by self-training.
pub fn predict_zero_shot(
    y_hat: &TargetMatrix,
    table: &EmbeddingTable,
    target_vocabulary: &[String],
    method: Method,
    selftrain: bool,
    opts: &ZslOptions,
) -> Result<ZslOutcome> {
    let mut prototypes = build_power_set(table, target_vocabulary)?;
    if selftrain {
        prototypes = self_train_prototypes(&prototypes, y_hat, opts.k_selftrain, opts.distance)?;
    }
    let prediction = match method {
        Method::Exdap => {
            exdap_predict(y_hat, &table.matrix(target_vocabulary)?, opts.threshold)?
        }
        Method::Dmp => dmp_predict(y_hat, &prototypes, opts.distance)?,
        Method::Tramp => {
            let graph = build_knn_graph(y_hat, &prototypes, &opts.graph())?;
            tramp_predict(&graph, prototypes.label_matrix(), opts.threshold)?
        }
    };
    Ok(ZslOutcome {
        prediction,
        prototypes,
    })
}
