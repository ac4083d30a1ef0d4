//! Multi-label evaluation: Hamming loss, micro-averaged F1, ranking loss and
//! label-ranking average precision.
//!
//! Lower is better for Hamming and ranking loss, higher for MicroF1 and AP.
//! Reports also carry `1 - MicroF1` and `1 - AP` so every column reads
//! "smaller is better".

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZsmlError};
use crate::zsl::rank_labels;

fn same_shape<A: nalgebra::Scalar, B: nalgebra::Scalar>(
    a: &DMatrix<A>,
    b: &DMatrix<B>,
    what: &str,
) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(ZsmlError::Shape(format!(
            "{what}: prediction is {:?}, truth is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(ZsmlError::Validation(format!("{what}: empty label matrix")));
    }
    Ok(())
}

/// Fraction of label entries where prediction and truth differ.
pub fn hamming_loss(pred: &DMatrix<u8>, truth: &DMatrix<u8>) -> Result<f64> {
    same_shape(pred, truth, "hamming loss")?;
    let wrong = pred.iter().zip(truth.iter()).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / pred.len() as f64)
}

/// Pooled true positives, false positives and false negatives.
pub fn confusion_counts(pred: &DMatrix<u8>, truth: &DMatrix<u8>) -> Result<(usize, usize, usize)> {
    same_shape(pred, truth, "micro F1")?;
    let mut counts = (0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        match (p != 0, t != 0) {
            (true, true) => counts.0 += 1,
            (true, false) => counts.1 += 1,
            (false, true) => counts.2 += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}

/// `2 TP / (2 TP + FP + FN)` over all entries; 0 when there are no positives
/// on either side.
pub fn micro_f1(pred: &DMatrix<u8>, truth: &DMatrix<u8>) -> Result<f64> {
    let (tp, fp, fn_) = confusion_counts(pred, truth)?;
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    })
}

/// Instances with at least one positive and one negative label take part in
/// the ranking metrics; the rest are skipped.
fn eligible(truth: &DMatrix<u8>, i: usize) -> bool {
    let pos = truth.row(i).iter().filter(|&&t| t != 0).count();
    pos > 0 && pos < truth.ncols()
}

fn ranking_inputs(scores: &DMatrix<f64>, truth: &DMatrix<u8>, what: &str) -> Result<Vec<usize>> {
    same_shape(scores, truth, what)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ZsmlError::Validation(format!("{what}: scores must be finite")));
    }
    let rows: Vec<usize> = (0..truth.nrows()).filter(|&i| eligible(truth, i)).collect();
    if rows.is_empty() {
        return Err(ZsmlError::Validation(format!(
            "{what}: no instance has both a positive and a negative label"
        )));
    }
    Ok(rows)
}

/// Number of instances excluded from the ranking metrics.
pub fn ranking_skipped(truth: &DMatrix<u8>) -> usize {
    (0..truth.nrows()).filter(|&i| !eligible(truth, i)).count()
}

/// Mean over eligible instances of the fraction of (positive, negative)
/// label pairs ordered wrongly; ties count one half.
pub fn ranking_loss(scores: &DMatrix<f64>, truth: &DMatrix<u8>) -> Result<f64> {
    let rows = ranking_inputs(scores, truth, "ranking loss")?;
    let m = truth.ncols();
    let mut total = 0.0;
    for &i in &rows {
        let (mut bad, mut pairs) = (0.0, 0usize);
        for p in (0..m).filter(|&j| truth[(i, j)] != 0) {
            for q in (0..m).filter(|&j| truth[(i, j)] == 0) {
                pairs += 1;
                let (sp, sq) = (scores[(i, p)], scores[(i, q)]);
                if sp < sq {
                    bad += 1.0;
                } else if sp == sq {
                    bad += 0.5;
                }
            }
        }
        total += bad / pairs as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Label-ranking average precision: for each positive label, the fraction of
/// labels ranked at or above it that are positive; averaged over positives
/// and then over eligible instances. Rank order follows [`rank_labels`].
pub fn average_precision(scores: &DMatrix<f64>, truth: &DMatrix<u8>) -> Result<f64> {
    let rows = ranking_inputs(scores, truth, "average precision")?;
    let order = rank_labels(scores);
    let mut total = 0.0;
    for &i in &rows {
        let (mut hits, mut sum, mut positives) = (0usize, 0.0, 0usize);
        for (rank, &label) in order[i].iter().enumerate() {
            if truth[(i, label)] != 0 {
                hits += 1;
                positives += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        total += sum / positives as f64;
    }
    Ok(total / rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hamming_loss: f64,
    pub micro_f1: f64,
    pub ranking_loss: f64,
    pub average_precision: f64,
    pub one_minus_micro_f1: f64,
    pub one_minus_average_precision: f64,
    pub n_instances: usize,
    pub m_labels: usize,
    /// Instances left out of the ranking metrics (all or no labels positive).
    pub ranking_skipped: usize,
}

impl EvalReport {
    /// Computes all four metrics. `scores` drives the ranking metrics and
    /// `pred` the set-based ones.
    pub fn compute(pred: &DMatrix<u8>, scores: &DMatrix<f64>, truth: &DMatrix<u8>) -> Result<Self> {
        let micro_f1 = micro_f1(pred, truth)?;
        let average_precision = average_precision(scores, truth)?;
        Ok(Self {
            hamming_loss: hamming_loss(pred, truth)?,
            micro_f1,
            ranking_loss: ranking_loss(scores, truth)?,
            average_precision,
            one_minus_micro_f1: 1.0 - micro_f1,
            one_minus_average_precision: 1.0 - average_precision,
            n_instances: truth.nrows(),
            m_labels: truth.ncols(),
            ranking_skipped: ranking_skipped(truth),
        })
    }

    /// Aligned plain-text table, as printed by `zsml evaluate`.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("hamming_loss", self.hamming_loss),
            ("micro_f1", self.micro_f1),
            ("1-micro_f1", self.one_minus_micro_f1),
            ("ranking_loss", self.ranking_loss),
            ("average_precision", self.average_precision),
            ("1-average_precision", self.one_minus_average_precision),
        ];
        let _ = writeln!(s, "{:<20} {:>10}", "metric", "value");
        for (name, v) in rows {
            let _ = writeln!(s, "{name:<20} {v:>10.6}");
        }
        let _ = writeln!(
            s,
            "instances {} labels {} ranking_skipped {}",
            self.n_instances, self.m_labels, self.ranking_skipped
        );
        s
    }
}
