//! Tool-use detectors: decide per instance whether to apply the generated
//! row filter, given the reader's baseline prediction.
//!
//! Linear detectors are logistic regressions over standardized
//! `(seq_log_prob, row_count)`; the label is "baseline answer is wrong".

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reader::{EmptyLogprobs, ReaderPrediction};
use crate::table::Table;

pub const FEATURE_NAMES: [&str; 2] = ["seq_log_prob", "row_count"];
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub seq_log_prob: f64,
    /// Rows in the original, untruncated table.
    pub row_count: usize,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.seq_log_prob, self.row_count as f64]
    }
}

pub fn extract_features(
    table: &Table,
    baseline: &ReaderPrediction,
) -> Result<FeatureVector, EmptyLogprobs> {
    Ok(FeatureVector {
        seq_log_prob: baseline.seq_log_prob()?,
        row_count: table.num_rows(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Never,
    Always,
    Oracle,
    #[serde(alias = "seqlogprob")]
    SeqlogprobOnly,
    Combined,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Never,
        DetectorKind::Always,
        DetectorKind::Oracle,
        DetectorKind::SeqlogprobOnly,
        DetectorKind::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Never => "never",
            DetectorKind::Always => "always",
            DetectorKind::Oracle => "oracle",
            DetectorKind::SeqlogprobOnly => "seqlogprob_only",
            DetectorKind::Combined => "combined",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, DetectorKind::SeqlogprobOnly | DetectorKind::Combined)
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "never" => Ok(DetectorKind::Never),
            "always" => Ok(DetectorKind::Always),
            "oracle" => Ok(DetectorKind::Oracle),
            "seqlogprob" | "seqlogprob_only" => Ok(DetectorKind::SeqlogprobOnly),
            "combined" => Ok(DetectorKind::Combined),
            other => Err(DetectorError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; 2],
    /// Population stdev; constant features are stored as 1.
    pub stdev: [f64; 2],
}

impl Default for FeatureStats {
    fn default() -> Self {
        FeatureStats {
            mean: [0.0; 2],
            stdev: [1.0; 2],
        }
    }
}

impl FeatureStats {
    pub fn fit(points: &[[f64; 2]]) -> FeatureStats {
        let n = points.len().max(1) as f64;
        let mut stats = FeatureStats::default();
        for j in 0..2 {
            let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            stats.mean[j] = mean;
            stats.stdev[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        stats
    }

    pub fn normalize(&self, raw: [f64; 2]) -> [f64; 2] {
        [
            (raw[0] - self.mean[0]) / self.stdev[0],
            (raw[1] - self.mean[1]) / self.stdev[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub trainer: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub records: usize,
    pub positives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub weights: [f64; 2],
    pub bias: f64,
    pub threshold: f64,
    pub feature_stats: FeatureStats,
    #[serde(default)]
    pub training_meta: Option<TrainingMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub sigma: bool,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("unknown detector kind {0:?}")]
    UnknownKind(String),
    #[error("the oracle detector needs gold answers; use oracle_decide")]
    OracleNeedsGold,
    #[error("{0} detectors are not trained")]
    NotTrainable(&'static str),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("detector model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("detector model json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl DetectorModel {
    /// A feature-blind detector (`never`, `always` or `oracle`).
    pub fn fixed(kind: DetectorKind) -> DetectorModel {
        DetectorModel {
            kind,
            weights: [0.0; 2],
            bias: 0.0,
            threshold: DEFAULT_THRESHOLD,
            feature_stats: FeatureStats::default(),
            training_meta: None,
        }
    }

    /// Probability that the baseline answer is wrong.
    pub fn score(&self, features: &FeatureVector) -> f64 {
        let x = self.feature_stats.normalize(features.as_array());
        sigmoid(self.weights[0] * x[0] + self.weights[1] * x[1] + self.bias)
    }

    pub fn decide(&self, features: &FeatureVector) -> Result<Decision, DetectorError> {
        match self.kind {
            DetectorKind::Never => Ok(Decision {
                sigma: false,
                score: 0.0,
            }),
            DetectorKind::Always => Ok(Decision {
                sigma: true,
                score: 1.0,
            }),
            DetectorKind::Oracle => Err(DetectorError::OracleNeedsGold),
            DetectorKind::SeqlogprobOnly | DetectorKind::Combined => {
                let score = self.score(features);
                Ok(Decision {
                    sigma: score >= self.threshold,
                    score,
                })
            }
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<DetectorModel, DetectorError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(DetectorError::Threshold(threshold));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DetectorError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DetectorModel, DetectorError> {
        let model: DetectorModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if !(model.threshold > 0.0 && model.threshold < 1.0) {
            return Err(DetectorError::Threshold(model.threshold));
        }
        Ok(model)
    }
}

/// `sigma = 1` exactly when the baseline answer is wrong.
pub fn oracle_decide<F>(gold_answers: &[String], baseline: &ReaderPrediction, em_fn: F) -> bool
where
    F: Fn(&str, &[String]) -> bool,
{
    !em_fn(&baseline.answer_text, gold_answers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            l2: 0.0,
        }
    }
}

/// Trains a linear detector with default options.
pub fn train_detector(
    records: &[(FeatureVector, bool)],
    kind: DetectorKind,
) -> Result<DetectorModel, DetectorError> {
    train_detector_with(records, kind, &TrainOptions::default())
}

/// Full-batch gradient descent on the logistic loss from zero weights.
///
/// Fewer than two records, or a single label class, yields the matching
/// fixed detector (`always` for all-wrong baselines, `never` otherwise) with
/// a warning in the training metadata.
pub fn train_detector_with(
    records: &[(FeatureVector, bool)],
    kind: DetectorKind,
    options: &TrainOptions,
) -> Result<DetectorModel, DetectorError> {
    if !kind.is_linear() {
        return Err(DetectorError::NotTrainable(kind.as_str()));
    }
    let positives = records.iter().filter(|(_, y)| *y).count();
    let mut meta = TrainingMeta {
        trainer: "logistic_regression_full_batch_gd".into(),
        epochs: options.epochs,
        learning_rate: options.learning_rate,
        l2: options.l2,
        records: records.len(),
        positives,
        warning: None,
    };
    if records.len() < 2 || positives == 0 || positives == records.len() {
        let fallback = if positives > 0 && positives == records.len() {
            DetectorKind::Always
        } else {
            DetectorKind::Never
        };
        let warning = format!(
            "cannot fit a classifier on {} records with {} positive; using the {} detector",
            records.len(),
            positives,
            fallback.as_str()
        );
        log::warn!("{warning}");
        meta.warning = Some(warning);
        let mut model = DetectorModel::fixed(fallback);
        model.training_meta = Some(meta);
        return Ok(model);
    }

    let raw: Vec<[f64; 2]> = records.iter().map(|(f, _)| f.as_array()).collect();
    let stats = FeatureStats::fit(&raw);
    let xs: Vec<[f64; 2]> = raw.iter().map(|r| stats.normalize(*r)).collect();
    let ys: Vec<f64> = records.iter().map(|(_, y)| f64::from(u8::from(*y))).collect();
    let active = match kind {
        DetectorKind::SeqlogprobOnly => [1.0, 0.0],
        _ => [1.0, 1.0],
    };
    let n = xs.len() as f64;
    let mut w = [0.0f64; 2];
    let mut b = 0.0f64;
    for _ in 0..options.epochs {
        let mut gw = [0.0f64; 2];
        let mut gb = 0.0f64;
        for (x, y) in xs.iter().zip(&ys) {
            let err = sigmoid(w[0] * x[0] + w[1] * x[1] + b) - y;
            gw[0] += err * x[0];
            gw[1] += err * x[1];
            gb += err;
        }
        for j in 0..2 {
            w[j] -= options.learning_rate * active[j] * (gw[j] / n + options.l2 * w[j]);
        }
        b -= options.learning_rate * gb / n;
    }
    Ok(DetectorModel {
        kind,
        weights: w,
        bias: b,
        threshold: DEFAULT_THRESHOLD,
        feature_stats: stats,
        training_meta: Some(meta),
    })
}

/// A dev instance with both outcomes known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub features: FeatureVector,
    pub em_baseline: bool,
    pub em_tool: bool,
}

/// Combined-system EM when the tool fires on scores `>= threshold`.
pub fn combined_em(scores: &[f64], records: &[TuneRecord], threshold: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(records)
        .filter(|(s, r)| if **s >= threshold { r.em_tool } else { r.em_baseline })
        .count();
    hits as f64 / records.len() as f64
}

/// Picks the threshold that maximizes dev EM of the combined system.
///
/// Candidates are the distinct model scores inside (0, 1) plus one point
/// above the largest score (tool never fires). Ties go to the larger
/// threshold, i.e. fewer tool applications. Fixed detectors keep their
/// threshold.
pub fn tune_threshold(model: &DetectorModel, dev: &[TuneRecord]) -> f64 {
    if !model.kind.is_linear() || dev.is_empty() {
        return model.threshold;
    }
    let scores: Vec<f64> = dev.iter().map(|r| model.score(&r.features)).collect();
    let mut candidates: Vec<f64> = scores
        .iter()
        .copied()
        .filter(|s| *s > 0.0 && *s < 1.0)
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max < 1.0 {
        candidates.push((max.max(0.0) + 1.0) / 2.0);
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, model.threshold);
    for tau in candidates {
        let em = combined_em(&scores, dev, tau);
        // Ascending sweep with >= keeps the largest threshold among ties.
        if em >= best.0 {
            best = (em, tau);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(slp: f64, rows: usize) -> FeatureVector {
        FeatureVector {
            seq_log_prob: slp,
            row_count: rows,
        }
    }

    #[test]
    fn features_from_toy_prediction() {
        let one: &[&str] = &["1"];
        let t = Table::from_strs("t", &["a"], &[one; 10]);
        let p = ReaderPrediction {
            answer_text: "x".into(),
            token_logprobs: vec![-0.1, -0.1],
            truncated_input: false,
            backend: "toy".into(),
        };
        let f = extract_features(&t, &p).unwrap();
        assert!((f.seq_log_prob + 0.1).abs() < 1e-12);
        assert_eq!(f.row_count, 10);
        let empty = ReaderPrediction {
            token_logprobs: vec![],
            ..p
        };
        assert!(extract_features(&t, &empty).is_err());
    }

    #[test]
    fn static_kinds() {
        let f = fv(-3.0, 7);
        assert!(!DetectorModel::fixed(DetectorKind::Never).decide(&f).unwrap().sigma);
        assert!(DetectorModel::fixed(DetectorKind::Always).decide(&f).unwrap().sigma);
        assert!(matches!(
            DetectorModel::fixed(DetectorKind::Oracle).decide(&f),
            Err(DetectorError::OracleNeedsGold)
        ));
    }

    #[test]
    fn separable_training_set_is_fit_exactly() {
        let records: Vec<(FeatureVector, bool)> = (0..40)
            .map(|i| {
                let wrong = i % 2 == 0;
                let slp = if wrong { -2.0 - (i as f64) * 0.01 } else { -0.1 - (i as f64) * 0.001 };
                (fv(slp, 10 + i), wrong)
            })
            .collect();
        let model = train_detector(&records, DetectorKind::Combined).unwrap();
        for (f, y) in &records {
            assert_eq!(model.decide(f).unwrap().sigma, *y);
        }
    }

    #[test]
    fn single_class_falls_back() {
        let all_wrong = vec![(fv(-1.0, 3), true), (fv(-2.0, 4), true)];
        let m = train_detector(&all_wrong, DetectorKind::Combined).unwrap();
        assert_eq!(m.kind, DetectorKind::Always);
        assert!(m.training_meta.unwrap().warning.is_some());
        let one = vec![(fv(-1.0, 3), false)];
        assert_eq!(
            train_detector(&one, DetectorKind::Combined).unwrap().kind,
            DetectorKind::Never
        );
        assert!(train_detector(&one, DetectorKind::Oracle).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let records: Vec<(FeatureVector, bool)> =
            (0..30).map(|i| (fv(-(i as f64) / 10.0, i * 3), i % 3 == 0)).collect();
        let a = train_detector(&records, DetectorKind::Combined).unwrap();
        let b = train_detector(&records, DetectorKind::Combined).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn seqlogprob_only_ignores_rows() {
        let records: Vec<(FeatureVector, bool)> =
            (0..30).map(|i| (fv(-(i as f64) / 10.0, i * 3), i > 15)).collect();
        let m = train_detector(&records, DetectorKind::SeqlogprobOnly).unwrap();
        assert_eq!(m.weights[1], 0.0);
        assert!(m.weights[0] < 0.0);
    }

    #[test]
    fn constant_feature_stdev_is_clamped() {
        let stats = FeatureStats::fit(&[[1.0, 5.0], [2.0, 5.0]]);
        assert_eq!(stats.stdev[1], 1.0);
        assert_eq!(stats.stdev[0], 0.5);
    }

    #[test]
    fn threshold_tuning() {
        let records: Vec<(FeatureVector, bool)> =
            (0..20).map(|i| (fv(-(i as f64) / 5.0, 10), i >= 10)).collect();
        let model = train_detector(&records, DetectorKind::Combined).unwrap();

        // Tool never helps: no tool applications at the chosen threshold.
        let useless: Vec<TuneRecord> = records
            .iter()
            .map(|(f, y)| TuneRecord {
                features: *f,
                em_baseline: !*y,
                em_tool: false,
            })
            .collect();
        let tau = tune_threshold(&model, &useless);
        assert!(useless.iter().all(|r| !model.clone().with_threshold(tau).unwrap().decide(&r.features).unwrap().sigma));

        // Tool fixes exactly the wrong ones: oracle-equivalent EM.
        let perfect: Vec<TuneRecord> = records
            .iter()
            .map(|(f, y)| TuneRecord {
                features: *f,
                em_baseline: !*y,
                em_tool: *y,
            })
            .collect();
        let tau = tune_threshold(&model, &perfect);
        let scores: Vec<f64> = perfect.iter().map(|r| model.score(&r.features)).collect();
        assert_eq!(combined_em(&scores, &perfect, tau), 1.0);
    }

    #[test]
    fn decide_is_monotone_in_score() {
        let records: Vec<(FeatureVector, bool)> =
            (0..20).map(|i| (fv(-(i as f64) / 5.0, 10), i >= 10)).collect();
        let model = train_detector(&records, DetectorKind::Combined).unwrap();
        let mut fired = false;
        for i in 0..200 {
            let d = model.decide(&fv(-(i as f64) / 50.0, 10)).unwrap();
            assert!(!(fired && !d.sigma));
            fired |= d.sigma;
        }
        assert!(fired);
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let records = vec![(fv(-1.0, 3), true), (fv(-0.1, 4), false)];
        let m = train_detector(&records, DetectorKind::Combined).unwrap();
        m.save(&path).unwrap();
        assert_eq!(DetectorModel::load(&path).unwrap(), m);
        assert_eq!("seqlogprob".parse::<DetectorKind>().unwrap(), DetectorKind::SeqlogprobOnly);
    }
}
