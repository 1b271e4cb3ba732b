//! Sequence-quality metrics over per-step probability rows.
//!
//! "Soft" metrics credit the probability mass placed on the correct class
//! instead of only counting argmax hits: a row predicting the right class
//! with probability 0.8 contributes 0.8, not 1. Soft precision/recall use
//! per-class accumulators (probability-weighted true/false positives and
//! false negatives) macro-averaged over all 9 classes. The weighted F1 is
//! the conventional hard-argmax, support-weighted score.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::task::NUM_TASK_TYPES;

/// Default denominator guard for precision/recall.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// One decoded sequence: a 9-way probability row per non-pad step plus the
/// ground-truth class per step. Pad positions are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePrediction {
    rows: Vec<[f64; NUM_TASK_TYPES]>,
    targets: Vec<usize>,
}

impl SequencePrediction {
    pub fn new(rows: Vec<[f64; NUM_TASK_TYPES]>, targets: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(SchedError::InvalidConfig(
                "a sequence prediction needs at least one step".into(),
            ));
        }
        if rows.len() != targets.len() {
            return Err(SchedError::SizeMismatch {
                instance: targets.len(),
                schedule: rows.len(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= NUM_TASK_TYPES) {
            return Err(SchedError::InvalidTypeId(bad));
        }
        Ok(SequencePrediction { rows, targets })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; NUM_TASK_TYPES]] {
        &self.rows
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Argmax class per step, ties resolved to the lowest class id.
    pub fn hard_predictions(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax_class(r)).collect()
    }
}

/// Index of the row maximum; the first (lowest) index wins ties.
pub fn argmax_class(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Everything the evaluation report card carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_soft_accuracy: f64,
    pub avg_soft_precision: f64,
    pub avg_soft_recall: f64,
    pub weighted_f1: f64,
    pub per_class_f1: [f64; NUM_TASK_TYPES],
    pub epsilon: f64,
}

fn check_batch(batch: &[SequencePrediction]) -> Result<()> {
    if batch.is_empty() {
        return Err(SchedError::EmptyDataset);
    }
    Ok(())
}

/// Mean over sequences of the per-sequence mean probability assigned to
/// the correct class.
pub fn soft_accuracy(batch: &[SequencePrediction]) -> Result<f64> {
    check_batch(batch)?;
    let total: f64 = batch
        .iter()
        .map(|seq| {
            let hit: f64 = seq
                .rows
                .iter()
                .zip(&seq.targets)
                .map(|(row, &y)| row[y])
                .sum();
            hit / seq.len() as f64
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Macro-averaged soft precision and recall over the 9 classes.
///
/// Per class `c`, accumulated over every step of every sequence:
/// `TP_c += P(c)` where the target is `c`, `FP_c += P(c)` where it is not,
/// `FN_c += 1 - P(c)` where the target is `c`. Classes with no probability
/// mass and no support contribute `0 / (0 + eps) = 0` to the mean.
pub fn soft_precision_recall(batch: &[SequencePrediction], epsilon: f64) -> Result<(f64, f64)> {
    check_batch(batch)?;
    let mut tp = [0.0f64; NUM_TASK_TYPES];
    let mut fp = [0.0f64; NUM_TASK_TYPES];
    let mut fna = [0.0f64; NUM_TASK_TYPES];
    for seq in batch {
        for (row, &y) in seq.rows.iter().zip(&seq.targets) {
            for (c, &p) in row.iter().enumerate() {
                if c == y {
                    tp[c] += p;
                    fna[c] += 1.0 - p;
                } else {
                    fp[c] += p;
                }
            }
        }
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    for c in 0..NUM_TASK_TYPES {
        precision += tp[c] / (tp[c] + fp[c] + epsilon);
        recall += tp[c] / (tp[c] + fna[c] + epsilon);
    }
    Ok((
        precision / NUM_TASK_TYPES as f64,
        recall / NUM_TASK_TYPES as f64,
    ))
}

/// Support-weighted F1 over hard argmax predictions, plus the per-class
/// F1 values it averages.
pub fn weighted_f1(batch: &[SequencePrediction]) -> Result<(f64, [f64; NUM_TASK_TYPES])> {
    check_batch(batch)?;
    let mut tp = [0usize; NUM_TASK_TYPES];
    let mut fp = [0usize; NUM_TASK_TYPES];
    let mut fna = [0usize; NUM_TASK_TYPES];
    let mut support = [0usize; NUM_TASK_TYPES];
    let mut total = 0usize;
    for seq in batch {
        for (row, &y) in seq.rows.iter().zip(&seq.targets) {
            let pred = argmax_class(row);
            support[y] += 1;
            total += 1;
            if pred == y {
                tp[y] += 1;
            } else {
                fp[pred] += 1;
                fna[y] += 1;
            }
        }
    }
    let mut per_class = [0.0f64; NUM_TASK_TYPES];
    for c in 0..NUM_TASK_TYPES {
        let p_den = tp[c] + fp[c];
        let r_den = tp[c] + fna[c];
        if p_den == 0 || r_den == 0 {
            continue;
        }
        let p = tp[c] as f64 / p_den as f64;
        let r = tp[c] as f64 / r_den as f64;
        if p + r > 0.0 {
            per_class[c] = 2.0 * p * r / (p + r);
        }
    }
    let weighted = (0..NUM_TASK_TYPES)
        .map(|c| per_class[c] * support[c] as f64)
        .sum::<f64>()
        / total as f64;
    Ok((weighted, per_class))
}

/// Compute the full report card in one pass over the batch.
pub fn metrics_report(batch: &[SequencePrediction], epsilon: f64) -> Result<MetricsReport> {
    let avg_soft_accuracy = soft_accuracy(batch)?;
    let (avg_soft_precision, avg_soft_recall) = soft_precision_recall(batch, epsilon)?;
    let (weighted, per_class_f1) = weighted_f1(batch)?;
    Ok(MetricsReport {
        avg_soft_accuracy,
        avg_soft_precision,
        avg_soft_recall,
        weighted_f1: weighted,
        per_class_f1,
        epsilon,
    })
}
