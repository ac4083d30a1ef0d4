//! Regression from instance features into the word space.
//!
//! Two model kinds share one interface:
//!
//! - [`JointModel`]: one hidden ReLU layer followed by a linear least-squares
//!   output layer, trained end to end so every output dimension shares the
//!   hidden representation.
//! - [`LinearModel`]: ridge regression fitted per output column in closed
//!   form, the independent-per-output baseline.

mod gradient;
mod joint;
mod ridge;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};

pub use gradient::{
    check_gradients_against, gradient_check, loss_and_gradients, objective, Gradients,
};
pub use joint::{train_joint, EpochStats, Optimizer, TrainConfig, TrainedJoint};
pub use ridge::train_independent;

/// Instance features, one row per instance. Entries are finite and the
/// matrix is at least `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

/// Word-space coordinates, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix(DMatrix<f64>);

macro_rules! finite_matrix {
    ($name:ident, $what:literal) => {
        impl $name {
            pub fn new(values: DMatrix<f64>) -> Result<Self> {
                if values.nrows() == 0 || values.ncols() == 0 {
                    return Err(ZsmlError::Validation(format!(
                        "{} must have at least one row and one column, got {}x{}",
                        $what,
                        values.nrows(),
                        values.ncols()
                    )));
                }
                if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                    let (r, c) = (pos % values.nrows(), pos / values.nrows());
                    return Err(ZsmlError::Validation(format!(
                        "{} entry ({r}, {c}) is not finite",
                        $what
                    )));
                }
                Ok(Self(values))
            }

            /// Builds from row-major data.
            pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
                if data.len() != rows * cols {
                    return Err(ZsmlError::Shape(format!(
                        "{} of {rows}x{cols} needs {} values, got {}",
                        $what,
                        rows * cols,
                        data.len()
                    )));
                }
                Self::new(DMatrix::from_row_slice(rows, cols, data))
            }

            pub fn rows(&self) -> usize {
                self.0.nrows()
            }

            pub fn cols(&self) -> usize {
                self.0.ncols()
            }

            pub fn as_matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_inner(self) -> DMatrix<f64> {
                self.0
            }

            /// Row `i` copied into a vector.
            pub fn row_vec(&self, i: usize) -> Vec<f64> {
                self.0.row(i).iter().copied().collect()
            }
        }
    };
}

finite_matrix!(FeatureMatrix, "feature matrix");
finite_matrix!(TargetMatrix, "target matrix");

/// Which regressor family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Joint,
    Independent,
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegressorKind::Joint => "joint",
            RegressorKind::Independent => "independent",
        })
    }
}

/// `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    /// `input x hidden`
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// `hidden x output`
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `input x output`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressionModel {
    Joint(JointModel),
    Independent(LinearModel),
}

impl JointModel {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DMatrix::zeros(input, hidden),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, output),
            b2: DVector::zeros(output),
        }
    }

    /// Pre-activations and hidden activations for a batch.
    pub(crate) fn hidden(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut z = x * &self.w1;
        for mut row in z.row_iter_mut() {
            row += self.b1.transpose();
        }
        let h = z.map(|v| v.max(0.0));
        (z, h)
    }

    pub(crate) fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (_, h) = self.hidden(x);
        let mut y = h * &self.w2;
        for mut row in y.row_iter_mut() {
            row += self.b2.transpose();
        }
        y
    }
}

impl LinearModel {
    pub(crate) fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.w;
        for mut row in y.row_iter_mut() {
            row += self.b.transpose();
        }
        y
    }
}

impl RegressionModel {
    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressionModel::Joint(_) => RegressorKind::Joint,
            RegressionModel::Independent(_) => RegressorKind::Independent,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RegressionModel::Joint(m) => m.w1.nrows(),
            RegressionModel::Independent(m) => m.w.nrows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            RegressionModel::Joint(m) => m.w2.ncols(),
            RegressionModel::Independent(m) => m.w.ncols(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Parameter blocks in a fixed order: `w1, b1, w2, b2` or `w, b`.
    pub(crate) fn parameters(&self) -> Vec<&[f64]> {
        match self {
            RegressionModel::Joint(m) => vec![
                m.w1.as_slice(),
                m.b1.as_slice(),
                m.w2.as_slice(),
                m.b2.as_slice(),
            ],
            RegressionModel::Independent(m) => vec![m.w.as_slice(), m.b.as_slice()],
        }
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            RegressionModel::Joint(m) => vec![
                m.w1.as_mut_slice(),
                m.b1.as_mut_slice(),
                m.w2.as_mut_slice(),
                m.b2.as_mut_slice(),
            ],
            RegressionModel::Independent(m) => vec![m.w.as_mut_slice(), m.b.as_mut_slice()],
        }
    }

    pub(crate) fn forward_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            RegressionModel::Joint(m) => m.forward(x),
            RegressionModel::Independent(m) => m.forward(x),
        }
    }

    /// Projects every row of `x` into the word space.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<TargetMatrix> {
        if x.cols() != self.input_dim() {
            return Err(ZsmlError::Shape(format!(
                "model expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        TargetMatrix::new(self.forward_raw(x.as_matrix()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelFile::from(self))
            .map_err(|e| ZsmlError::json("serializing model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ZsmlError::json("parsing model", e))?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| ZsmlError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ZsmlError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk model layout. Matrices are stored row-major.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    kind: RegressorKind,
    input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b1: Option<Vec<f64>>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: Vec<f64>, name: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(ZsmlError::Shape(format!(
            "model parameter `{name}` should hold {rows}x{cols} values, found {}",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn vector(len: usize, data: Vec<f64>, name: &str) -> Result<DVector<f64>> {
    if data.len() != len {
        return Err(ZsmlError::Shape(format!(
            "model parameter `{name}` should hold {len} values, found {}",
            data.len()
        )));
    }
    Ok(DVector::from_vec(data))
}

impl From<&RegressionModel> for ModelFile {
    fn from(model: &RegressionModel) -> Self {
        match model {
            RegressionModel::Joint(m) => ModelFile {
                kind: RegressorKind::Joint,
                input_dim: m.w1.nrows(),
                hidden: Some(m.w1.ncols()),
                output_dim: m.w2.ncols(),
                w1: Some(row_major(&m.w1)),
                b1: Some(m.b1.as_slice().to_vec()),
                w2: row_major(&m.w2),
                b2: m.b2.as_slice().to_vec(),
            },
            RegressionModel::Independent(m) => ModelFile {
                kind: RegressorKind::Independent,
                input_dim: m.w.nrows(),
                hidden: None,
                output_dim: m.w.ncols(),
                w1: None,
                b1: None,
                w2: row_major(&m.w),
                b2: m.b.as_slice().to_vec(),
            },
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<RegressionModel> {
        let model = match self.kind {
            RegressorKind::Joint => {
                let hidden = self.hidden.filter(|&h| h >= 1).ok_or_else(|| {
                    ZsmlError::Validation("joint model needs `hidden` >= 1".into())
                })?;
                let (Some(w1), Some(b1)) = (self.w1, self.b1) else {
                    return Err(ZsmlError::Validation(
                        "joint model needs `w1` and `b1`".into(),
                    ));
                };
                RegressionModel::Joint(JointModel {
                    w1: from_row_major(self.input_dim, hidden, w1, "w1")?,
                    b1: vector(hidden, b1, "b1")?,
                    w2: from_row_major(hidden, self.output_dim, self.w2, "w2")?,
                    b2: vector(self.output_dim, self.b2, "b2")?,
                })
            }
            RegressorKind::Independent => {
                if self.hidden.is_some() || self.w1.is_some() || self.b1.is_some() {
                    return Err(ZsmlError::Validation(
                        "independent model has no hidden layer".into(),
                    ));
                }
                RegressionModel::Independent(LinearModel {
                    w: from_row_major(self.input_dim, self.output_dim, self.w2, "w2")?,
                    b: vector(self.output_dim, self.b2, "b2")?,
                })
            }
        };
        if !model.is_finite() {
            return Err(ZsmlError::Validation(
                "model parameters must be finite".into(),
            ));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_joint(rng: &mut ChaCha8Rng, i: usize, h: usize, o: usize) -> JointModel {
        let mut g = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        JointModel {
            w1: g(i, h),
            b1: g(h, 1).column(0).into_owned(),
            w2: g(h, o),
            b2: g(o, 1).column(0).into_owned(),
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = RegressionModel::Joint(JointModel::zeros(3, 4, 2));
        let x = FeatureMatrix::from_rows(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        let y = m.predict(&x).unwrap();
        assert!(y.as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_clamps_negative_input() {
        let mut m = JointModel::zeros(2, 2, 2);
        m.w1 = DMatrix::identity(2, 2);
        m.w2 = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -2.0, 5.0]);
        m.b2 = DVector::from_vec(vec![0.25, -0.75]);
        let m = RegressionModel::Joint(m);
        let x = FeatureMatrix::from_rows(1, 2, &[-1.0, -4.0]).unwrap();
        let y = m.predict(&x).unwrap();
        assert_eq!(y.row_vec(0), vec![0.25, -0.75]);
    }

    #[test]
    fn predict_rejects_width_mismatch() {
        let m = RegressionModel::Joint(JointModel::zeros(3, 4, 2));
        let x = FeatureMatrix::from_rows(1, 2, &[1.0, 2.0]).unwrap();
        assert!(matches!(m.predict(&x), Err(ZsmlError::Shape(_))));
    }

    #[test]
    fn matrices_reject_non_finite_and_empty() {
        assert!(FeatureMatrix::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(TargetMatrix::new(DMatrix::zeros(0, 3)).is_err());
        assert!(FeatureMatrix::from_rows(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn joint_forward_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_joint(&mut rng, 5, 7, 3);
        let xs = DMatrix::from_fn(100, 5, |_, _| rng.random_range(-2.0..2.0));
        let y = m.forward(&xs);
        for r in 0..100 {
            for o in 0..3 {
                let mut acc = m.b2[o];
                for h in 0..7 {
                    let mut z = m.b1[h];
                    for i in 0..5 {
                        z += xs[(r, i)] * m.w1[(i, h)];
                    }
                    acc += z.max(0.0) * m.w2[(h, o)];
                }
                assert!((acc - y[(r, o)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_rejects_inconsistent_shapes() {
        let text = r#"{"kind":"independent","input_dim":2,"output_dim":1,"w2":[1.0],"b2":[0.0]}"#;
        assert!(RegressionModel::from_json(text).is_err());
        let text = r#"{"kind":"independent","input_dim":1,"output_dim":1,"w2":[1.0],"b2":[0.0],"extra":1}"#;
        assert!(RegressionModel::from_json(text).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_lossless(seed in any::<u64>(), joint in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = if joint {
                let mut m = random_joint(&mut rng, 3, 4, 2);
                m.w1[(0, 0)] = 1.0 / 3.0;
                m.b2[1] = -2.2250738585072014e-308;
                RegressionModel::Joint(m)
            } else {
                RegressionModel::Independent(LinearModel {
                    w: DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>() * 1e-9),
                    b: DVector::from_fn(2, |_, _| rng.random::<f64>() * 1e9),
                })
            };
            let back = RegressionModel::from_json(&model.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, model);
        }
    }
}
