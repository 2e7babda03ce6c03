//! Post-training open-set inference: family centroids, distance thresholds,
//! the distance-based detection rule, the probability-threshold baseline,
//! and the evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{l2_dist, Mat};

/// Mean embedding per known family.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    /// k_known × d_z.
    pub centroids: Mat,
    pub counts: Vec<usize>,
}

/// c_k = (1/N_k) Σ over family-k training embeddings.
pub fn compute_centroids(
    embeddings: &Mat,
    labels: &[usize],
    k_known: usize,
    family_names: &[String],
) -> Result<CentroidTable> {
    assert_eq!(embeddings.rows, labels.len());
    let d = embeddings.cols;
    let mut centroids = Mat::zeros(k_known, d);
    let mut counts = vec![0usize; k_known];
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < k_known, "label {label} outside known range");
        counts[label] += 1;
        let row = embeddings.row(i);
        for (acc, v) in centroids.row_mut(label).iter_mut().zip(row) {
            *acc += v;
        }
    }
    for k in 0..k_known {
        if counts[k] == 0 {
            let name = family_names
                .get(k)
                .cloned()
                .unwrap_or_else(|| format!("id {k}"));
            return Err(Error::EmptyFamily(name));
        }
        for v in centroids.row_mut(k) {
            *v /= counts[k] as f64;
        }
    }
    Ok(CentroidTable { centroids, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// One δ = max_k δ_k shared by every family (the formula reading).
    Global,
    /// Family-specific δ_k (the text reading); the default.
    PerFamily,
}

/// δ_k = max over family-k training samples of the distance to c_k,
/// and δ = max_k δ_k.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub delta_global: f64,
    pub delta_per_family: Vec<f64>,
    pub mode: ThresholdMode,
}

impl ThresholdTable {
    pub fn threshold_for(&self, family: usize) -> f64 {
        match self.mode {
            ThresholdMode::Global => self.delta_global,
            ThresholdMode::PerFamily => self.delta_per_family[family],
        }
    }
}

pub fn compute_thresholds(
    embeddings: &Mat,
    labels: &[usize],
    centroids: &CentroidTable,
    mode: ThresholdMode,
) -> ThresholdTable {
    let k = centroids.centroids.rows;
    let mut delta = vec![0.0f64; k];
    for (i, &label) in labels.iter().enumerate() {
        let d = l2_dist(embeddings.row(i), centroids.centroids.row(label));
        if d > delta[label] {
            delta[label] = d;
        }
    }
    let delta_global = delta.iter().cloned().fold(0.0, f64::max);
    ThresholdTable {
        delta_global,
        delta_per_family: delta,
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub verdict: Verdict,
    pub distance: f64,
    pub tentative_family: usize,
}

impl DetectionResult {
    pub fn is_known(&self) -> bool {
        matches!(self.verdict, Verdict::Known(_))
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// The pure distance rule: given the tentatively-predicted family, compare
/// the centroid distance against that family's threshold (inclusive).
pub fn distance_verdict(
    z: &[f64],
    tentative: usize,
    centroids: &CentroidTable,
    thresholds: &ThresholdTable,
) -> DetectionResult {
    let distance = l2_dist(z, centroids.centroids.row(tentative));
    let verdict = if distance <= thresholds.threshold_for(tentative) {
        Verdict::Known(tentative)
    } else {
        Verdict::Unknown
    };
    DetectionResult {
        verdict,
        distance,
        tentative_family: tentative,
    }
}

/// Full detection for one embedding: tentative family from the classifier
/// scores, then the distance rule.
pub fn detect_embedding(
    z: &[f64],
    class_scores: &[f64],
    centroids: &CentroidTable,
    thresholds: &ThresholdTable,
) -> DetectionResult {
    let tentative = argmax_lowest(class_scores);
    distance_verdict(z, tentative, centroids, thresholds)
}

/// Probability-threshold baseline: Unknown iff max_k probability ≤ δ_p.
pub fn detect_probability_baseline(probs: &[f64], delta_p: f64) -> DetectionResult {
    debug_assert!(delta_p > 0.0 && delta_p < 1.0);
    let tentative = argmax_lowest(probs);
    let top = probs[tentative];
    let verdict = if top <= delta_p {
        Verdict::Unknown
    } else {
        Verdict::Known(tentative)
    };
    DetectionResult {
        verdict,
        distance: top,
        tentative_family: tentative,
    }
}

/// N_correct / N_sample over known-family test samples.
pub fn cls_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::UndefinedMetric(
            "classification accuracy needs a nonempty prediction/label pairing".into(),
        ));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// (TPR over known samples, TNR over unknown samples, their mean).
pub fn det_accuracy(
    known: &[DetectionResult],
    unknown: &[DetectionResult],
) -> Result<(f64, f64, f64)> {
    if known.is_empty() || unknown.is_empty() {
        return Err(Error::UndefinedMetric(
            "detection accuracy needs both known and unknown verdicts".into(),
        ));
    }
    let tp = known.iter().filter(|r| r.is_known()).count();
    let tn = unknown.iter().filter(|r| !r.is_known()).count();
    let tpr = tp as f64 / known.len() as f64;
    let tnr = tn as f64 / unknown.len() as f64;
    Ok((tpr, tnr, (tpr + tnr) / 2.0))
}

/// K×K counts with row = predicted family, column = ground truth.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], k_known: usize) -> Vec<Vec<u64>> {
    assert_eq!(predictions.len(), labels.len());
    let mut m = vec![vec![0u64; k_known]; k_known];
    for (&p, &l) in predictions.iter().zip(labels) {
        m[p][l] += 1;
    }
    m
}

pub fn confusion_trace_total(matrix: &[Vec<u64>]) -> (u64, u64) {
    let trace = matrix.iter().enumerate().map(|(i, row)| row[i]).sum();
    let total = matrix.iter().flatten().sum();
    (trace, total)
}
