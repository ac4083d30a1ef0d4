//! Zero-shot multi-label predictors operating on projected test instances.

mod dmp;
mod exdap;
mod graph;
mod rank;
mod selftrain;
mod tramp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dmp::dmp_predict;
pub use exdap::exdap_predict;
pub use graph::{build_knn_graph, GraphOptions, KnnGraph, PrototypeNeighbors, SigmaConvention};
pub use rank::rank_labels;
pub use selftrain::self_train_prototypes;
pub use tramp::tramp_predict;

pub use crate::wordspace::Distance;

/// Default binarization threshold for exDAP and TraMP scores.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_K_GRAPH: usize = 10;
pub const DEFAULT_K_SELFTRAIN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exdap,
    Dmp,
    Tramp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exdap => "exdap",
            Method::Dmp => "dmp",
            Method::Tramp => "tramp",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = crate::ZsmlError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "exdap" => Ok(Method::Exdap),
            "dmp" => Ok(Method::Dmp),
            "tramp" => Ok(Method::Tramp),
            other => Err(crate::ZsmlError::Usage(format!(
                "unknown method `{other}` (expected exdap, dmp or tramp)"
            ))),
        }
    }
}

/// Per-instance label scores and the binarized label sets derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub method: Method,
    /// `n_T x m_T`, higher is more confident.
    pub scores: DMatrix<f64>,
    /// `n_T x m_T` in `{0, 1}`.
    pub binary: DMatrix<u8>,
    /// DMP only: chosen prototype row per instance, `None` for instances
    /// whose projection was the zero vector.
    pub chosen: Option<Vec<Option<usize>>>,
    /// Conditioning warnings, regularization notices and flagged instances.
    pub diagnostics: Vec<String>,
}

pub(crate) fn threshold_scores(scores: &DMatrix<f64>, threshold: f64) -> DMatrix<u8> {
    scores.map(|s| u8::from(s >= threshold))
}

/// Prediction settings shared by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZslOptions {
    pub k_graph: usize,
    pub k_selftrain: usize,
    pub threshold: f64,
    pub distance: Distance,
    pub sigma: SigmaConvention,
    pub prototype_neighbors: PrototypeNeighbors,
}

impl Default for ZslOptions {
    fn default() -> Self {
        Self {
            k_graph: DEFAULT_K_GRAPH,
            k_selftrain: DEFAULT_K_SELFTRAIN,
            threshold: DEFAULT_THRESHOLD,
            distance: Distance::Cosine,
            sigma: SigmaConvention::MedianSquared,
            prototype_neighbors: PrototypeNeighbors::All,
        }
    }
}

impl ZslOptions {
    pub fn graph(&self) -> GraphOptions {
        GraphOptions {
            k: self.k_graph,
            distance: self.distance,
            sigma: self.sigma,
            prototype_neighbors: self.prototype_neighbors,
        }
    }
}
