use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};
use crate::regression::TargetMatrix;
use crate::wordspace::{cosine_from_parts, dot, rows_of, Distance, PrototypeSet};

/// How the kernel bandwidth is derived from the median `M` of squared
/// pairwise distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// `sigma^2 = M`, so the kernel is `exp(-d^2 / (2 M))`.
    #[default]
    MedianSquared,
    /// `sigma = M`, so the kernel is `exp(-d^2 / (2 M^2))`.
    Literal,
}

/// Which nodes a prototype row may choose as neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeNeighbors {
    /// Test instances and other prototypes.
    #[default]
    All,
    /// Test instances only.
    TestOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub k: usize,
    pub distance: Distance,
    pub sigma: SigmaConvention,
    pub prototype_neighbors: PrototypeNeighbors,
}

impl GraphOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            distance: Distance::Cosine,
            sigma: SigmaConvention::MedianSquared,
            prototype_neighbors: PrototypeNeighbors::All,
        }
    }
}

/// Row-stochastic kNN graph over `[test instances, prototypes]`.
///
/// Nodes `0..n_test` are test instances, nodes `n_test..` are prototypes in
/// prototype-set order. Each row holds at most `k` weights summing to one and
/// never includes its own node.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n_test: usize,
    n_prototypes: usize,
    k: usize,
    sigma_squared: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl KnnGraph {
    pub fn n_test(&self) -> usize {
        self.n_test
    }

    pub fn n_prototypes(&self) -> usize {
        self.n_prototypes
    }

    pub fn node_count(&self) -> usize {
        self.n_test + self.n_prototypes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The `2 sigma^2` denominator is twice this value.
    pub fn sigma_squared(&self) -> f64 {
        self.sigma_squared
    }

    /// Sparse row `i` as `(column, weight)` pairs sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut w = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    /// Builds a graph from explicit rows. Rows must be normalized, free of
    /// self-loops and have at most `k` entries.
    pub fn from_rows(
        n_test: usize,
        n_prototypes: usize,
        k: usize,
        sigma_squared: f64,
        mut rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let n = n_test + n_prototypes;
        if rows.len() != n {
            return Err(ZsmlError::Shape(format!("{} rows for {n} nodes", rows.len())));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.len() > k {
                return Err(ZsmlError::Validation(format!("row {i} has more than {k} entries")));
            }
            if row.iter().any(|&(j, w)| j == i || j >= n || !(w >= 0.0) || !w.is_finite()) {
                return Err(ZsmlError::Validation(format!("row {i} has an invalid entry")));
            }
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(ZsmlError::Validation(format!("row {i} repeats a column")));
            }
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if !row.is_empty() && (sum - 1.0).abs() > 1e-10 {
                return Err(ZsmlError::Validation(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            n_test,
            n_prototypes,
            k,
            sigma_squared,
            rows,
        })
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Gaussian-weighted kNN graph over the pooled projected test instances and
/// prototypes.
///
/// Neighbors are the `k` closest other nodes (ties by lower node index).
/// Weights are `exp(-d^2 / (2 sigma^2))`, row-normalized, with `sigma` from
/// the median squared distance over all node pairs.
pub fn build_knn_graph(
    y_hat: &TargetMatrix,
    prototypes: &PrototypeSet,
    opts: &GraphOptions,
) -> Result<KnnGraph> {
    if y_hat.cols() != prototypes.dim() {
        return Err(ZsmlError::Shape(format!(
            "predictions have dimension {}, prototypes have {}",
            y_hat.cols(),
            prototypes.dim()
        )));
    }
    let n_test = y_hat.rows();
    let n_proto = prototypes.len();
    let n = n_test + n_proto;
    let k = opts.k;
    if k == 0 {
        return Err(ZsmlError::Validation("graph k must be positive".into()));
    }
    if k >= n {
        return Err(ZsmlError::Validation(format!(
            "graph k = {k} must be smaller than the node count {n}"
        )));
    }
    if opts.prototype_neighbors == PrototypeNeighbors::TestOnly && k > n_test {
        return Err(ZsmlError::Validation(format!(
            "graph k = {k} exceeds the {n_test} test instances available to prototype rows"
        )));
    }

    let mut nodes = rows_of(y_hat.as_matrix());
    nodes.extend(rows_of(prototypes.prototypes()));
    let sq: Vec<f64> = nodes.iter().map(|v| dot(v, v)).collect();
    if opts.distance == Distance::Cosine {
        if let Some(i) = sq.iter().position(|&s| s == 0.0) {
            return Err(ZsmlError::Domain(format!(
                "graph node {i} is the zero vector; cosine distance undefined"
            )));
        }
    }

    // Full distance matrix, row by row.
    let dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match opts.distance {
                    Distance::Cosine => cosine_from_parts(dot(&nodes[i], &nodes[j]), sq[i], sq[j]),
                    Distance::Euclidean => nodes[i]
                        .iter()
                        .zip(&nodes[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                })
                .collect()
        })
        .collect();

    let pair_sq: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dist[i][j] * dist[i][j])
        .collect();
    let med = median(pair_sq);
    if !(med > 0.0) {
        return Err(ZsmlError::Domain(
            "kernel bandwidth is zero: all graph nodes coincide".into(),
        ));
    }
    let sigma_squared = match opts.sigma {
        SigmaConvention::MedianSquared => med,
        SigmaConvention::Literal => med * med,
    };

    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let restrict = i >= n_test && opts.prototype_neighbors == PrototypeNeighbors::TestOnly;
            let limit = if restrict { n_test } else { n };
            let mut cand: Vec<usize> = (0..limit).filter(|&j| j != i).collect();
            cand.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
            cand.truncate(k);
            // Shift by the nearest distance so the largest weight is exp(0).
            let d0 = dist[i][cand[0]];
            let raw: Vec<f64> = cand
                .iter()
                .map(|&j| {
                    let d = dist[i][j];
                    (-(d * d - d0 * d0) / (2.0 * sigma_squared)).exp()
                })
                .collect();
            let z: f64 = raw.iter().sum();
            let mut row: Vec<(usize, f64)> = cand.into_iter().zip(raw).map(|(j, w)| (j, w / z)).collect();
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();

    Ok(KnnGraph {
        n_test,
        n_prototypes: n_proto,
        k,
        sigma_squared,
        rows,
    })
}
