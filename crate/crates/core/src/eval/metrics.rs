use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool::Label;

/// Default decision threshold on the positive-class probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Threshold metrics; a metric whose denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Predicts PD when `score >= threshold`.
pub fn confusion_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<Confusion> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", scores.len()),
            format!("{}", labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (l.is_positive(), s >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Confusion {
        true_positive: tp,
        false_negative: fn_,
        true_negative: tn,
        false_positive: fp,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}

/// Per-class score histogram over equal-width bins on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub pd_counts: Vec<usize>,
    pub hc_counts: Vec<usize>,
}

/// Bins are left-closed except the last, which also holds 1.0. Scores
/// outside `[0, 1]` are clamped into the end bins.
pub fn histogram_scores(samples: &[(f64, Label)], bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let mut pd_counts = vec![0; bins];
    let mut hc_counts = vec![0; bins];
    for &(score, label) in samples {
        let raw = (score * bins as f64).floor();
        let bin = if raw.is_nan() { 0 } else { (raw.max(0.0) as usize).min(bins - 1) };
        match label {
            Label::Parkinson => pd_counts[bin] += 1,
            Label::Healthy => hc_counts[bin] += 1,
        }
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(Histogram {
        edges,
        pd_counts,
        hc_counts,
    })
}
