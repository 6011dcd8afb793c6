//! Evaluation: confusion-matrix metrics, average precision, MAP, the
//! fixed-function check and 2-D PCA projections.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FunctionRecord, Label};
use crate::encoder::EmbeddingVector;
use crate::trainer::{predict, ClassifierHead, TrainError};
use crate::EncoderModel;

pub const PR_AUC_METHOD: &str = "average_precision_stepwise";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("record {0:?} has no fixed_code")]
    MissingFixedCode(String),
    #[error("need at least {needed} vectors of dimension >= 2, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("embedding dimensions differ")]
    DimensionMismatch,
    #[error("prediction failed: {0}")]
    Prediction(#[from] TrainError),
}

/// One scored example: the model's probability for the vulnerable class,
/// its thresholded label, and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub probability: f64,
    pub predicted: Label,
    pub actual: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_scored(scored: &[Scored]) -> Self {
        let mut m = Self::default();
        for s in scored {
            match (s.predicted.is_vulnerable(), s.actual.is_vulnerable()) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fn_ += 1,
            }
        }
        m
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; absent when either is
    /// undefined or both are zero.
    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }
}

/// The five headline metrics. Undefined ratios are `None` (serialised as
/// `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub pr_auc: Option<f64>,
    pub pr_auc_method: String,
}

pub fn compute_metrics(scored: &[Scored]) -> Result<(MetricsReport, ConfusionMatrix), EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let m = ConfusionMatrix::from_scored(scored);
    let pairs: Vec<(f64, bool)> = scored.iter().map(|s| (s.probability, s.actual.is_vulnerable())).collect();
    let report = MetricsReport {
        accuracy: m.accuracy(),
        precision: m.precision(),
        recall: m.recall(),
        f1: m.f1(),
        pr_auc: average_precision(&pairs)?,
        pr_auc_method: PR_AUC_METHOD.to_string(),
    };
    Ok((report, m))
}

/// Indices sorted by descending score, ties by ascending index.
pub fn ranking(scores: &[(f64, bool)]) -> Result<Vec<usize>, EvalError> {
    if let Some(i) = scores.iter().position(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .0
            .partial_cmp(&scores[a].0)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// Step-wise average precision over the ranking: the sum, across cut-offs,
/// of the recall increase times the precision at that cut-off. `None` when
/// there are no positives.
pub fn average_precision(scores: &[(f64, bool)]) -> Result<Option<f64>, EvalError> {
    let order = ranking(scores)?;
    let positives = scores.iter().filter(|(_, y)| *y).count();
    if positives == 0 {
        return Ok(None);
    }
    let (mut tp, mut ap, mut prev_recall) = (0usize, 0.0, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if scores[i].1 {
            tp += 1;
            let recall = tp as f64 / positives as f64;
            let precision = tp as f64 / (rank + 1) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Ok(Some(ap))
}

/// Mean over lists of average precision, each list being relevance flags in
/// rank order. A list without relevant items contributes 0.
pub fn mean_average_precision(lists: &[Vec<bool>]) -> Result<f64, EvalError> {
    if lists.is_empty() || lists.iter().any(Vec::is_empty) {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = lists
        .iter()
        .map(|flags| {
            let relevant = flags.iter().filter(|&&f| f).count();
            if relevant == 0 {
                return 0.0;
            }
            let mut hits = 0;
            let sum: f64 = flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(rank, _)| {
                    hits += 1;
                    hits as f64 / (rank + 1) as f64
                })
                .sum();
            sum / relevant as f64
        })
        .sum();
    Ok(total / lists.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedFunctionReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Classifies the fixed version of every vulnerable record; a
/// non-vulnerable prediction counts as correct.
pub fn evaluate_fixed_functions(
    model: &EncoderModel,
    head: &ClassifierHead,
    records: &[FunctionRecord],
    threshold: f64,
) -> Result<FixedFunctionReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut correct = 0;
    for r in records {
        let fixed = r
            .fixed_code
            .as_deref()
            .ok_or_else(|| EvalError::MissingFixedCode(r.id.clone()))?;
        if predict(model, head, fixed, threshold)?.label == Label::NonVulnerable {
            correct += 1;
        }
    }
    Ok(FixedFunctionReport {
        correct,
        total: records.len(),
        accuracy: correct as f64 / records.len() as f64,
    })
}

/// Result of projecting embeddings onto their top two principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub points: Vec<[f64; 2]>,
    /// Unit principal directions in the original space.
    pub directions: [Vec<f64>; 2],
    /// Variance (covariance eigenvalue, `n - 1` normalisation) per component.
    pub component_variance: [f64; 2],
    pub explained_variance_ratio: [f64; 2],
    /// Sum of the per-coordinate variances of the input.
    pub total_variance: f64,
    /// True when the data has rank below two; the missing component then
    /// has zero variance and zero coordinates.
    pub degenerate: bool,
}

/// Relative eigenvalue size below which a component counts as absent.
const RANK_TOLERANCE: f64 = 1e-12;

pub fn pca_project(embeddings: &[EmbeddingVector]) -> Result<PcaProjection, EvalError> {
    let rows: Vec<&[f64]> = embeddings.iter().map(EmbeddingVector::as_slice).collect();
    pca_project_rows(&rows)
}

pub fn pca_project_rows(rows: &[&[f64]]) -> Result<PcaProjection, EvalError> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if n < 3 || d < 2 {
        return Err(EvalError::InsufficientData { needed: 3, found: n });
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(EvalError::DimensionMismatch);
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let floor = RANK_TOLERANCE * total_variance.max(f64::MIN_POSITIVE);
    let mut directions: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut component_variance = [0.0; 2];
    let mut present = [false; 2];
    for c in 0..2 {
        let k = idx[c];
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let lambda = eig.eigenvalues[k];
        present[c] = lambda > floor;
        component_variance[c] = if present[c] { lambda } else { 0.0 };
        directions[c] = v;
    }
    let points = (0..n)
        .map(|i| {
            let mut p = [0.0; 2];
            for c in 0..2 {
                if present[c] {
                    p[c] = x.row(i).iter().zip(&directions[c]).map(|(a, b)| a * b).sum();
                }
            }
            p
        })
        .collect();
    let ratio = |v: f64| if total_variance > 0.0 { v / total_variance } else { 0.0 };
    Ok(PcaProjection {
        points,
        explained_variance_ratio: [ratio(component_variance[0]), ratio(component_variance[1])],
        directions,
        component_variance,
        total_variance,
        degenerate: !present[1],
    })
}
