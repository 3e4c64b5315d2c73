//! Reconstruction-error anomaly detection and its evaluation protocol.
//!
//! A trained autoencoder reconstructs normal data well and anomalies badly.
//! Scoring is per-sample mean squared reconstruction error; the decision
//! threshold μ comes from the training errors via IQR rules, a fixed
//! percentile, or an assumed contamination rate. Evaluation is k-fold:
//! train on each fold's normal complement, test on the fold's anomalies plus
//! an equal number of its held-out normals, score with F1.

use serde::{Deserialize, Serialize};

use crate::data::{self, DataError, LabeledDataset};
use crate::linalg::Matrix;
use crate::model::{self, Architecture, DaefModel, ModelError};
use crate::rng::SplitMix64;

#[derive(Debug, thiserror::Error)]
pub enum AnomalyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("threshold fitting needs at least 4 error values, got {got}")]
    TooFewSamples { got: usize },
    #[error("error values must be finite and non-negative")]
    InvalidErrors,
    #[error("invalid threshold parameter: {0}")]
    InvalidSpec(String),
    #[error("prediction and truth lengths differ ({predicted} vs {truth})")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("truth labels contain no positives")]
    NoPositives,
    #[error("fold {fold} received no anomalies")]
    InsufficientAnomalies { fold: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Decision rule for the reconstruction-error threshold μ, always fitted on
/// training errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// Q₃ + 1.5·IQR of the training errors.
    UnusualIqr,
    /// Q₃ + 3·IQR of the training errors.
    ExtremeIqr,
    /// The q-quantile of the training errors, q in (0, 1).
    Percentile { q: f64 },
    /// The (1 − rate)-quantile, for an assumed anomaly fraction in (0, 1).
    Contamination { rate: f64 },
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<(), AnomalyError> {
        match *self {
            ThresholdSpec::Percentile { q } if !(q > 0.0 && q < 1.0) => Err(
                AnomalyError::InvalidSpec(format!("percentile q must lie in (0,1), got {q}")),
            ),
            ThresholdSpec::Contamination { rate: r } if !(r > 0.0 && r < 1.0) => Err(
                AnomalyError::InvalidSpec(format!("contamination rate must lie in (0,1), got {r}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A threshold spec together with the μ it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedThreshold {
    pub spec: ThresholdSpec,
    pub mu: f64,
}

/// Per-sample mean squared reconstruction error.
pub fn reconstruction_errors(model: &DaefModel, x: &Matrix) -> Result<Vec<f64>, AnomalyError> {
    let recon = model::predict(model, x).map_err(|e| match e {
        ModelError::ShapeMismatch(msg) => AnomalyError::ShapeMismatch(msg),
        other => AnomalyError::Model(other),
    })?;
    let m = x.rows() as f64;
    Ok((0..x.cols())
        .map(|j| {
            (0..x.rows())
                .map(|i| {
                    let d = x[(i, j)] - recon[(i, j)];
                    d * d
                })
                .sum::<f64>()
                / m
        })
        .collect())
}

/// Quantile by linear interpolation between order statistics at
/// h = (n−1)·q on the sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

pub fn fit_threshold(train_errors: &[f64], spec: &ThresholdSpec) -> Result<f64, AnomalyError> {
    spec.validate()?;
    if train_errors.len() < 4 {
        return Err(AnomalyError::TooFewSamples {
            got: train_errors.len(),
        });
    }
    if !train_errors.iter().all(|e| e.is_finite() && *e >= 0.0) {
        return Err(AnomalyError::InvalidErrors);
    }
    let mut sorted = train_errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(match *spec {
        ThresholdSpec::UnusualIqr => {
            let q1 = quantile(&sorted, 0.25);
            let q3 = quantile(&sorted, 0.75);
            q3 + 1.5 * (q3 - q1)
        }
        ThresholdSpec::ExtremeIqr => {
            let q1 = quantile(&sorted, 0.25);
            let q3 = quantile(&sorted, 0.75);
            q3 + 3.0 * (q3 - q1)
        }
        ThresholdSpec::Percentile { q } => quantile(&sorted, q),
        ThresholdSpec::Contamination { rate } => quantile(&sorted, 1.0 - rate),
    })
}

/// Strictly above μ is an anomaly; equality stays normal.
pub fn classify(errors: &[f64], mu: f64) -> Vec<bool> {
    errors.iter().map(|&e| e > mu).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion_counts(predicted: &[bool], truth: &[bool]) -> Result<Confusion, AnomalyError> {
    if predicted.len() != truth.len() {
        return Err(AnomalyError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// F1 with the anomaly as the positive class: 2TP / (2TP + FP + FN), zero
/// when there are no true positives.
pub fn f1_score(predicted: &[bool], truth: &[bool]) -> Result<f64, AnomalyError> {
    if !truth.iter().any(|&t| t) {
        return Err(AnomalyError::NoPositives);
    }
    let c = confusion_counts(predicted, truth)?;
    if c.tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * c.tp as f64 / (2.0 * c.tp as f64 + c.fp as f64 + c.fn_ as f64))
}

/// Cross-validation settings beyond the fold count.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub partitions: usize,
    pub workers: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            partitions: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-fold F1 scores, in fold order.
    pub folds: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
    /// Per-fold fitted μ values.
    pub thresholds: Vec<f64>,
    pub confusion: Vec<Confusion>,
    pub config_fingerprint: String,
}

/// One fold's outcome, model included so callers can verify that nothing from
/// the test side influenced it.
#[derive(Debug)]
pub struct FoldOutcome {
    pub model: DaefModel,
    pub mu: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Trains on the given training samples (already restricted to normals),
/// fits μ on the training reconstruction errors, and scores the test samples.
/// The scaler, model, and threshold are all derived from the training side
/// alone.
pub fn evaluate_fold(
    ds: &LabeledDataset,
    train_idx: &[usize],
    test_idx: &[usize],
    arch: &Architecture,
    spec: &ThresholdSpec,
    cfg: &CvConfig,
) -> Result<FoldOutcome, AnomalyError> {
    let x_train_raw = ds
        .features
        .select_columns(train_idx)
        .map_err(ModelError::from)?;
    let scaler = data::scaler_fit(&x_train_raw)?;
    let x_train = data::scaler_apply(&scaler, &x_train_raw)?;
    let model = model::train(&x_train, arch, cfg.partitions, cfg.workers)?;
    let train_errors = reconstruction_errors(&model, &x_train)?;
    let mu = fit_threshold(&train_errors, spec)?;

    let x_test_raw = ds
        .features
        .select_columns(test_idx)
        .map_err(ModelError::from)?;
    let x_test = data::scaler_apply(&scaler, &x_test_raw)?;
    let errors = reconstruction_errors(&model, &x_test)?;
    let predicted = classify(&errors, mu);
    let truth: Vec<bool> = test_idx.iter().map(|&i| ds.labels[i]).collect();
    let f1 = f1_score(&predicted, &truth)?;
    let confusion = confusion_counts(&predicted, &truth)?;
    Ok(FoldOutcome {
        model,
        mu,
        f1,
        confusion,
    })
}

/// The benchmark protocol: stratified k-fold; per fold, train scaler + model
/// on the fold's training normals only, fit μ on training errors, and test on
/// a balanced set of the fold's anomalies plus an equal count of its held-out
/// normals, subsampled deterministically from the seed.
pub fn evaluate_cv(
    ds: &LabeledDataset,
    arch: &Architecture,
    spec: &ThresholdSpec,
    cfg: &CvConfig,
) -> Result<EvalReport, AnomalyError> {
    spec.validate()?;
    arch.validate()?;
    let assignment = data::split_folds(ds, cfg.folds, cfg.seed)?;

    let mut folds = Vec::with_capacity(cfg.folds);
    let mut thresholds = Vec::with_capacity(cfg.folds);
    let mut confusion = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..ds.len())
            .filter(|&i| assignment[i] != fold && !ds.labels[i])
            .collect();
        let anomalies: Vec<usize> = (0..ds.len())
            .filter(|&i| assignment[i] == fold && ds.labels[i])
            .collect();
        if anomalies.is_empty() {
            return Err(AnomalyError::InsufficientAnomalies { fold });
        }
        let mut normals: Vec<usize> = (0..ds.len())
            .filter(|&i| assignment[i] == fold && !ds.labels[i])
            .collect();
        // Balanced test set: all fold anomalies plus as many held-out normals.
        let mut rng =
            SplitMix64::new(cfg.seed ^ (0x5eed ^ fold as u64).wrapping_mul(0x9e3779b97f4a7c15));
        rng.shuffle(&mut normals);
        normals.truncate(anomalies.len());
        normals.sort_unstable();
        let mut test_idx = anomalies;
        test_idx.extend(normals);

        let outcome = evaluate_fold(ds, &train_idx, &test_idx, arch, spec, cfg)?;
        folds.push(outcome.f1);
        thresholds.push(outcome.mu);
        confusion.push(outcome.confusion);
    }

    let mean = folds.iter().sum::<f64>() / folds.len() as f64;
    let var = folds.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / folds.len() as f64;
    Ok(EvalReport {
        folds,
        mean_f1: mean,
        std_f1: var.sqrt(),
        thresholds,
        confusion,
        config_fingerprint: config_fingerprint(ds, arch, spec, cfg),
    })
}

/// Stable FNV-1a fingerprint of everything that determines a report.
fn config_fingerprint(
    ds: &LabeledDataset,
    arch: &Architecture,
    spec: &ThresholdSpec,
    cfg: &CvConfig,
) -> String {
    let canonical = format!(
        "{}|{}|{}|{}|{}|{}",
        ds.name,
        serde_json::to_string(arch).expect("architecture serializes"),
        serde_json::to_string(spec).expect("spec serializes"),
        cfg.folds,
        cfg.seed,
        cfg.partitions,
    );
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}
