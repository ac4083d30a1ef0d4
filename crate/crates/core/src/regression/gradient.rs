use nalgebra::DMatrix;

use super::{FeatureMatrix, RegressionModel, TargetMatrix};
use crate::error::{Result, ZsmlError};

/// Parameter gradients, one block per parameter in the order and memory
/// layout of `RegressionModel::parameters`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

fn check_shapes(model: &RegressionModel, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(ZsmlError::Shape(format!(
            "{} feature rows but {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() != model.input_dim() || y.ncols() != model.output_dim() {
        return Err(ZsmlError::Shape(format!(
            "model maps {} -> {}, data is {} -> {}",
            model.input_dim(),
            model.output_dim(),
            x.ncols(),
            y.ncols()
        )));
    }
    Ok(())
}

fn weight_penalty(model: &RegressionModel, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let sq = |m: &DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let total = match model {
        RegressionModel::Joint(m) => sq(&m.w1) + sq(&m.w2),
        RegressionModel::Independent(m) => sq(&m.w),
    };
    0.5 * l2 * total
}

/// Mean squared error over every entry plus `l2 / 2` times the squared
/// weights (biases are not penalized).
pub fn objective(
    model: &RegressionModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    l2: f64,
) -> Result<f64> {
    check_shapes(model, x, y)?;
    let diff = model.forward_raw(x) - y;
    Ok(diff.norm_squared() / diff.len() as f64 + weight_penalty(model, l2))
}

/// Analytic objective and gradients by backpropagation.
pub fn loss_and_gradients(
    model: &RegressionModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    l2: f64,
) -> Result<(f64, Gradients)> {
    check_shapes(model, x, y)?;
    let scale = 2.0 / (y.nrows() * y.ncols()) as f64;
    let col_sums = |m: &DMatrix<f64>| -> Vec<f64> {
        m.column_iter().map(|c| c.sum()).collect()
    };
    match model {
        RegressionModel::Joint(m) => {
            let (z, h) = m.hidden(x);
            let mut out = &h * &m.w2;
            for mut row in out.row_iter_mut() {
                row += m.b2.transpose();
            }
            let diff = out - y;
            let loss = diff.norm_squared() / diff.len() as f64 + weight_penalty(model, l2);
            let g_out = diff * scale;
            let mut dw2 = h.transpose() * &g_out;
            if l2 != 0.0 {
                dw2 += &m.w2 * l2;
            }
            let db2 = col_sums(&g_out);
            let mut dz = &g_out * m.w2.transpose();
            dz.zip_apply(&z, |g, zv| {
                if zv <= 0.0 {
                    *g = 0.0
                }
            });
            let mut dw1 = x.transpose() * &dz;
            if l2 != 0.0 {
                dw1 += &m.w1 * l2;
            }
            let db1 = col_sums(&dz);
            Ok((
                loss,
                Gradients {
                    blocks: vec![dw1.as_slice().to_vec(), db1, dw2.as_slice().to_vec(), db2],
                },
            ))
        }
        RegressionModel::Independent(m) => {
            let diff = m.forward(x) - y;
            let loss = diff.norm_squared() / diff.len() as f64 + weight_penalty(model, l2);
            let g_out = diff * scale;
            let mut dw = x.transpose() * &g_out;
            if l2 != 0.0 {
                dw += &m.w * l2;
            }
            let db = col_sums(&g_out);
            Ok((
                loss,
                Gradients {
                    blocks: vec![dw.as_slice().to_vec(), db],
                },
            ))
        }
    }
}

/// Worst relative discrepancy between the analytic gradients of the
/// objective and central finite differences with step `epsilon`.
pub fn gradient_check(
    model: &RegressionModel,
    x: &FeatureMatrix,
    y: &TargetMatrix,
    l2: f64,
    epsilon: f64,
) -> Result<f64> {
    let (_, analytic) = loss_and_gradients(model, x.as_matrix(), y.as_matrix(), l2)?;
    check_gradients_against(model, x, y, l2, epsilon, &analytic)
}

/// Compares a supplied gradient against central finite differences.
///
/// Relative error per parameter is `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn check_gradients_against(
    model: &RegressionModel,
    x: &FeatureMatrix,
    y: &TargetMatrix,
    l2: f64,
    epsilon: f64,
    analytic: &Gradients,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(ZsmlError::Validation("epsilon must be positive".into()));
    }
    let (xm, ym) = (x.as_matrix(), y.as_matrix());
    check_shapes(model, xm, ym)?;
    let sizes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    let supplied: Vec<usize> = analytic.blocks.iter().map(Vec::len).collect();
    if sizes != supplied {
        return Err(ZsmlError::Shape(format!(
            "gradient blocks {supplied:?} do not match parameters {sizes:?}"
        )));
    }

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (block, &size) in sizes.iter().enumerate() {
        for idx in 0..size {
            let original = probe.parameters()[block][idx];
            probe.parameters_mut()[block][idx] = original + epsilon;
            let plus = objective(&probe, xm, ym, l2)?;
            probe.parameters_mut()[block][idx] = original - epsilon;
            let minus = objective(&probe, xm, ym, l2)?;
            probe.parameters_mut()[block][idx] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.blocks[block][idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
