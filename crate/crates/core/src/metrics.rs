//! Multi-label evaluation: element-wise accuracy and per-label average precision.

use crate::error::{Error, Result};
use crate::labels::{LabelVector, NUM_LABELS};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Fraction of (sample, label) cells where `score >= threshold` agrees with
/// the label.
pub fn compute_accuracy(
    scores: &[[f64; NUM_LABELS]],
    labels: &[LabelVector],
    threshold: f64,
) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} score rows for {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::contract("accuracy of an empty evaluation set"));
    }
    let correct: usize = scores
        .iter()
        .zip(labels)
        .map(|(s, l)| s.iter().zip(l).filter(|(&s, &l)| (s >= threshold) == l).count())
        .sum();
    Ok(correct as f64 / (scores.len() * NUM_LABELS) as f64)
}

/// Average precision of one label's ranking.
///
/// Samples are ranked by descending score, ties by ascending index. AP is
/// the mean, over positive samples, of the precision at the positive's rank.
/// Returns `Ok(None)` when there are no positives.
pub fn compute_average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&b| b).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub accuracy: f64,
    /// `None` for labels without positives in the evaluation set.
    pub per_label_ap: [Option<f64>; NUM_LABELS],
    /// Mean over labels with at least one positive; `None` if there are none.
    pub mean_ap: Option<f64>,
    pub undefined_labels: usize,
}

pub fn summarize(scores: &[[f64; NUM_LABELS]], labels: &[LabelVector]) -> Result<EvalSummary> {
    let accuracy = compute_accuracy(scores, labels, DEFAULT_THRESHOLD)?;
    let mut per_label_ap = [None; NUM_LABELS];
    for (j, ap) in per_label_ap.iter_mut().enumerate() {
        let col: Vec<f64> = scores.iter().map(|s| s[j]).collect();
        let lab: Vec<bool> = labels.iter().map(|l| l[j]).collect();
        *ap = compute_average_precision(&col, &lab)?;
    }
    let defined: Vec<f64> = per_label_ap.iter().flatten().copied().collect();
    let mean_ap = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvalSummary {
        accuracy,
        per_label_ap,
        mean_ap,
        undefined_labels: NUM_LABELS - defined.len(),
    })
}
