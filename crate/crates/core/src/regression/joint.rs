use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gradient::{loss_and_gradients, objective};
use super::{FeatureMatrix, JointModel, RegressionModel, TargetMatrix};
use crate::error::{Result, ZsmlError};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_units: 1024,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            l2_penalty: 1e-4,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(ZsmlError::Validation(format!("train config: {what}")));
        if self.hidden_units == 0 {
            return bad("hidden_units must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be non-negative and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Training objective (MSE plus weight penalty) on the full data after the epoch.
    pub objective: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedJoint {
    pub model: RegressionModel,
    /// Objective of the freshly initialized model.
    pub initial_objective: f64,
    pub history: Vec<EpochStats>,
}

impl TrainedJoint {
    pub fn final_mse(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |e| e.mse)
    }
}

fn initialize(input: usize, hidden: usize, output: usize, seed: u64) -> JointModel {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "regression.init"));
    let he = Normal::new(0.0, (2.0 / input as f64).sqrt()).expect("valid std");
    let out = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid std");
    let w1 = DMatrix::from_fn(input, hidden, |_, _| he.sample(&mut rng));
    let w2 = DMatrix::from_fn(hidden, output, |_, _| out.sample(&mut rng));
    JointModel {
        w1,
        b1: DVector::zeros(hidden),
        w2,
        b2: DVector::zeros(output),
    }
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Trains the hidden-ReLU regressor on `(x, y)` by mini-batch gradient
/// descent on the mean squared error. Deterministic for a fixed `cfg.seed`.
pub fn train_joint(x: &FeatureMatrix, y: &TargetMatrix, cfg: &TrainConfig) -> Result<TrainedJoint> {
    cfg.validate()?;
    if x.rows() != y.rows() {
        return Err(ZsmlError::Shape(format!(
            "{} feature rows but {} target rows",
            x.rows(),
            y.rows()
        )));
    }
    let (xm, ym) = (x.as_matrix(), y.as_matrix());
    let n = x.rows();
    let mut model = RegressionModel::Joint(initialize(x.cols(), cfg.hidden_units, y.cols(), cfg.seed));
    let initial_objective = objective(&model, xm, ym, cfg.l2_penalty)?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "regression.batches"));
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = cfg.batch_size >= n;
    let mut adam = AdamState {
        m: model.parameters().iter().map(|p| vec![0.0; p.len()]).collect(),
        v: model.parameters().iter().map(|p| vec![0.0; p.len()]).collect(),
        t: 0,
    };
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if !full_batch {
            order.shuffle(&mut order_rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = if full_batch {
                loss_and_gradients(&model, xm, ym, cfg.l2_penalty)?
            } else {
                let xb = xm.select_rows(chunk.iter());
                let yb = ym.select_rows(chunk.iter());
                loss_and_gradients(&model, &xb, &yb, cfg.l2_penalty)?
            };
            if !loss.is_finite() {
                return Err(ZsmlError::Divergence { epoch, loss });
            }
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in model.parameters_mut().into_iter().zip(&grads.blocks) {
                        for (pv, gv) in p.iter_mut().zip(g) {
                            *pv -= cfg.learning_rate * gv;
                        }
                    }
                }
                Optimizer::Adam => {
                    adam.t += 1;
                    let c1 = 1.0 - beta1.powi(adam.t);
                    let c2 = 1.0 - beta2.powi(adam.t);
                    let params = model.parameters_mut();
                    for (((p, g), m), v) in params
                        .into_iter()
                        .zip(&grads.blocks)
                        .zip(adam.m.iter_mut())
                        .zip(adam.v.iter_mut())
                    {
                        for i in 0..p.len() {
                            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                            let mh = m[i] / c1;
                            let vh = v[i] / c2;
                            p[i] -= cfg.learning_rate * mh / (vh.sqrt() + eps);
                        }
                    }
                }
            }
        }
        let obj = objective(&model, xm, ym, cfg.l2_penalty)?;
        let mse = objective(&model, xm, ym, 0.0)?;
        if !obj.is_finite() {
            return Err(ZsmlError::Divergence { epoch, loss: obj });
        }
        history.push(EpochStats {
            epoch,
            objective: obj,
            mse,
        });
    }
    log::debug!(
        "joint regressor trained: {} epochs, final mse {:.3e}",
        cfg.epochs,
        history.last().map_or(f64::NAN, |e| e.mse)
    );
    Ok(TrainedJoint {
        model,
        initial_objective,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn relu_data(seed: u64, n: usize, d_in: usize, h: usize, d_out: usize) -> (FeatureMatrix, TargetMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d_in, |_, _| rng.random_range(-1.0f64..1.0));
        let a: DMatrix<f64> = DMatrix::from_fn(d_in, h, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(h, d_out, |_, _| rng.random_range(-0.5..0.5));
        let y = (&x * a).map(|v| v.max(0.0)) * b;
        (FeatureMatrix::new(x).unwrap(), TargetMatrix::new(y).unwrap())
    }

    #[test]
    fn fits_noiseless_relu_data() {
        let (x, y) = relu_data(3, 200, 4, 6, 3);
        let cfg = TrainConfig {
            hidden_units: 32,
            learning_rate: 3e-3,
            epochs: 600,
            batch_size: 32,
            l2_penalty: 0.0,
            ..TrainConfig::default()
        };
        let trained = train_joint(&x, &y, &cfg).unwrap();
        assert!(trained.final_mse() < 1e-3, "mse {}", trained.final_mse());
    }

    #[test]
    fn memorizes_single_point() {
        let x = FeatureMatrix::from_rows(1, 3, &[0.5, -0.2, 0.9]).unwrap();
        let y = TargetMatrix::from_rows(1, 2, &[1.5, -0.7]).unwrap();
        let cfg = TrainConfig {
            hidden_units: 8,
            learning_rate: 1e-2,
            epochs: 500,
            batch_size: 1,
            l2_penalty: 0.0,
            ..TrainConfig::default()
        };
        let trained = train_joint(&x, &y, &cfg).unwrap();
        let pred = trained.model.predict(&x).unwrap();
        for (p, t) in pred.row_vec(0).iter().zip([1.5, -0.7]) {
            assert!((p - t).abs() < 1e-3, "{p} vs {t}");
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let (x, y) = relu_data(9, 50, 3, 4, 2);
        let cfg = TrainConfig {
            hidden_units: 16,
            epochs: 5,
            batch_size: 8,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train_joint(&x, &y, &cfg).unwrap();
        let b = train_joint(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_joint(&x, &y, &TrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn full_batch_sgd_is_monotone() {
        let (x, y) = relu_data(5, 40, 3, 5, 2);
        let cfg = TrainConfig {
            hidden_units: 12,
            learning_rate: 1e-2,
            epochs: 300,
            batch_size: 1000,
            l2_penalty: 1e-4,
            optimizer: Optimizer::Sgd,
            seed: 1,
        };
        let t = train_joint(&x, &y, &cfg).unwrap();
        let mut prev = t.initial_objective;
        for e in &t.history {
            assert!(e.objective <= prev, "epoch {}: {} > {}", e.epoch, e.objective, prev);
            prev = e.objective;
        }
        assert!(prev < t.initial_objective);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = relu_data(5, 20, 3, 5, 2);
        let x = FeatureMatrix::new(x.into_inner() * 1e150).unwrap();
        let cfg = TrainConfig {
            hidden_units: 4,
            learning_rate: 10.0,
            epochs: 50,
            batch_size: 20,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_joint(&x, &y, &cfg),
            Err(ZsmlError::Divergence { .. })
        ));
    }

    #[test]
    fn rejects_row_mismatch_and_bad_config() {
        let (x, _) = relu_data(5, 20, 3, 5, 2);
        let (_, y) = relu_data(5, 21, 3, 5, 2);
        assert!(matches!(
            train_joint(&x, &y, &TrainConfig::default()),
            Err(ZsmlError::Shape(_))
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
