//! Per-instance composition of reader, detector and tool.
//!
//! For each instance: predict on the original table, extract features and
//! decide; when the tool fires, generate and apply the filter (with revert)
//! and predict again on the filtered table. A reverted or failed tool leaves
//! the table unchanged, so the baseline prediction is reused.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cache::content_key;
use crate::detector::{extract_features, DetectorKind, DetectorModel, FeatureVector};
use crate::filter::Expr;
use crate::reader::{BackendError, Reader, ReaderPrediction};
use crate::table::{
    apply_row_filter, random_row_filter, FilterLimits, FilterOutcome, RevertReason, Table,
    DEFAULT_BUDGET_TOKENS,
};
use crate::toolgen::{FilterGenerator, GenFailure, GeneratedTool};

use super::data::QAInstance;
use super::metric::exact_match;

/// Where the row filter comes from.
#[derive(Clone)]
pub enum ToolSource {
    Generator(Arc<dyn FilterGenerator>),
    /// The instance's reference predicate.
    Gold,
    /// Drops a random `fraction` of rows, seeded per instance.
    Random { fraction: f64, seed: u64 },
    /// The tautology `true`.
    Identity,
}

impl ToolSource {
    pub fn name(&self) -> String {
        match self {
            ToolSource::Generator(g) => g.backend().to_string(),
            ToolSource::Gold => "gold".into(),
            ToolSource::Random { .. } => "random".into(),
            ToolSource::Identity => "identity".into(),
        }
    }
}

#[derive(Clone)]
pub struct Pipeline {
    pub reader: Arc<dyn Reader>,
    pub tool: ToolSource,
    pub detector: DetectorModel,
    pub budget_tokens: usize,
    pub limits: FilterLimits,
    /// Compute the tool outcome for every instance, not only when it fires.
    pub force_tool: bool,
    pub workers: usize,
}

impl Pipeline {
    pub fn new(reader: Arc<dyn Reader>, tool: ToolSource, detector: DetectorModel) -> Pipeline {
        Pipeline {
            reader,
            tool,
            detector,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            limits: FilterLimits::default(),
            force_tool: false,
            workers: 1,
        }
    }
}

/// What a filter application did, without the table itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub applied: bool,
    pub revert_reason: RevertReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rows_before: usize,
    pub rows_after: usize,
}

impl FilterSummary {
    fn of(outcome: &FilterOutcome, rows_before: usize) -> FilterSummary {
        FilterSummary {
            applied: outcome.applied,
            revert_reason: outcome.revert_reason,
            error: outcome.error.as_ref().map(|e| e.to_string()),
            rows_before,
            rows_after: outcome.table.num_rows(),
        }
    }
}

/// The tool path for one instance: generation, filtering and the second
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<GeneratedTool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_failure: Option<GenFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<ReaderPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_error: Option<BackendError>,
    /// EM of the prediction on the (possibly reverted) filtered table.
    pub em: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub row_count: usize,
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_prediction: Option<ReaderPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_error: Option<BackendError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    pub detector: DetectorKind,
    pub sigma: bool,
    pub score: f64,
    /// Present when the tool fired, or for every record of a forced pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_outcome: Option<ToolOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_prediction: Option<ReaderPrediction>,
    pub em_baseline: bool,
    pub em_final: bool,
    pub reader_backend: String,
    pub tool_source: String,
}

impl RunRecord {
    pub fn final_answer(&self) -> Option<&str> {
        self.final_prediction.as_ref().map(|p| p.answer_text.as_str())
    }

    /// EM with the tool applied, if known.
    pub fn em_tool(&self) -> Option<bool> {
        self.tool_outcome.as_ref().map(|t| t.em)
    }
}

fn instance_seed(seed: u64, id: &str) -> u64 {
    let key = content_key(&[&seed.to_string(), id]);
    u64::from_str_radix(&key[..16], 16).expect("hex digest")
}

fn em_of(prediction: &Result<ReaderPrediction, BackendError>, gold: &[String]) -> bool {
    prediction
        .as_ref()
        .map(|p| exact_match(&p.answer_text, gold))
        .unwrap_or(false)
}

fn split(result: Result<ReaderPrediction, BackendError>) -> (Option<ReaderPrediction>, Option<BackendError>) {
    match result {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e)),
    }
}

impl Pipeline {
    fn filter_table(&self, instance: &QAInstance) -> (Option<GeneratedTool>, Result<FilterOutcome, GenFailure>) {
        let table = &instance.table;
        let apply = |tool: GeneratedTool| {
            let outcome = apply_row_filter(table, &tool.predicate, &self.limits);
            (Some(tool), Ok(outcome))
        };
        match &self.tool {
            ToolSource::Generator(g) => match g.generate(&instance.question, table) {
                Ok(tool) => apply(tool),
                Err(failure) => (None, Err(failure)),
            },
            ToolSource::Gold => match &instance.gold_predicate {
                Some(predicate) => apply(fixed_tool(predicate.clone(), "gold", instance, table)),
                None => (
                    None,
                    Err(GenFailure::Unavailable("instance has no gold predicate".into())),
                ),
            },
            ToolSource::Identity => apply(fixed_tool(Expr::Bool(true), "identity", instance, table)),
            ToolSource::Random { fraction, seed } => {
                let filtered = random_row_filter(table, *fraction, instance_seed(*seed, &instance.id));
                let outcome = if filtered.num_rows() == 0 {
                    FilterOutcome {
                        table: table.clone(),
                        applied: false,
                        revert_reason: RevertReason::EmptyResult,
                        error: None,
                    }
                } else {
                    FilterOutcome {
                        table: filtered,
                        applied: true,
                        revert_reason: RevertReason::None,
                        error: None,
                    }
                };
                (None, Ok(outcome))
            }
        }
    }

    fn tool_outcome(
        &self,
        instance: &QAInstance,
        baseline: &Result<ReaderPrediction, BackendError>,
    ) -> ToolOutcome {
        let (tool, filtered) = self.filter_table(instance);
        let (generation_failure, filter, prediction) = match filtered {
            Err(failure) => (Some(failure), None, baseline.clone()),
            Ok(outcome) => {
                let summary = FilterSummary::of(&outcome, instance.table.num_rows());
                let prediction = if outcome.applied {
                    self.reader
                        .predict(&instance.question, &outcome.table, self.budget_tokens)
                } else {
                    baseline.clone()
                };
                (None, Some(summary), prediction)
            }
        };
        let em = em_of(&prediction, &instance.gold_answers);
        let (prediction, prediction_error) = split(prediction);
        ToolOutcome {
            source: self.tool.name(),
            tool,
            generation_failure,
            filter,
            prediction,
            prediction_error,
            em,
        }
    }

    /// Runs one instance end to end.
    pub fn run_instance(&self, instance: &QAInstance) -> RunRecord {
        let gold = &instance.gold_answers;
        let baseline = self
            .reader
            .predict(&instance.question, &instance.table, self.budget_tokens);
        let em_baseline = em_of(&baseline, gold);
        let features = baseline
            .as_ref()
            .ok()
            .and_then(|p| extract_features(&instance.table, p).ok());

        let (sigma, score) = match self.detector.kind {
            DetectorKind::Oracle => (!em_baseline, if em_baseline { 0.0 } else { 1.0 }),
            _ => match &features {
                Some(f) => {
                    let d = self.detector.decide(f).expect("non-oracle detectors always decide");
                    (d.sigma, d.score)
                }
                // Without logprobs only the feature-blind policies can act.
                None => (self.detector.kind == DetectorKind::Always, 0.0),
            },
        };

        let tool_outcome =
            (sigma || self.force_tool).then(|| self.tool_outcome(instance, &baseline));
        let (final_prediction, em_final) = match (&tool_outcome, sigma) {
            (Some(t), true) => (t.prediction.clone(), t.em),
            _ => (baseline.as_ref().ok().cloned(), em_baseline),
        };
        let (baseline_prediction, baseline_error) = split(baseline);
        RunRecord {
            instance_id: instance.id.clone(),
            row_count: instance.table.num_rows(),
            gold_answers: gold.clone(),
            baseline_prediction,
            baseline_error,
            features,
            detector: self.detector.kind,
            sigma,
            score,
            tool_outcome,
            final_prediction,
            em_baseline,
            em_final,
            reader_backend: self.reader.backend().to_string(),
            tool_source: self.tool.name(),
        }
    }

    /// Runs every instance on a worker pool; records come back sorted by
    /// instance id together with per-instance wall time.
    pub fn run(&self, instances: &[QAInstance]) -> (Vec<RunRecord>, Vec<(String, Duration)>) {
        use rayon::prelude::*;
        let work = || {
            instances
                .par_iter()
                .map(|inst| {
                    let start = Instant::now();
                    let record = self.run_instance(inst);
                    (record, start.elapsed())
                })
                .collect::<Vec<_>>()
        };
        let mut results = match rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
        {
            Ok(pool) => pool.install(work),
            Err(e) => {
                log::warn!("worker pool unavailable ({e}); running on the global pool");
                work()
            }
        };
        results.sort_by(|a, b| a.0.instance_id.cmp(&b.0.instance_id));
        let timings = results
            .iter()
            .map(|(r, t)| (r.instance_id.clone(), *t))
            .collect();
        (results.into_iter().map(|(r, _)| r).collect(), timings)
    }
}

fn fixed_tool(predicate: Expr, source: &str, instance: &QAInstance, table: &Table) -> GeneratedTool {
    GeneratedTool {
        raw_completion: crate::filter::render_predicate(&predicate),
        predicate,
        source: source.into(),
        question_table_key: crate::toolgen::question_table_key(&instance.question, table),
    }
}

/// Reader-only run: the tool never fires.
pub fn run_baseline(
    reader: &dyn Reader,
    instances: &[QAInstance],
    budget_tokens: usize,
) -> Vec<RunRecord> {
    let mut records: Vec<RunRecord> = instances
        .iter()
        .map(|inst| {
            let result = reader.predict(&inst.question, &inst.table, budget_tokens);
            let em = em_of(&result, &inst.gold_answers);
            let features = result
                .as_ref()
                .ok()
                .and_then(|p| extract_features(&inst.table, p).ok());
            let (prediction, error) = split(result);
            RunRecord {
                instance_id: inst.id.clone(),
                row_count: inst.table.num_rows(),
                gold_answers: inst.gold_answers.clone(),
                final_prediction: prediction.clone(),
                baseline_prediction: prediction,
                baseline_error: error,
                features,
                detector: DetectorKind::Never,
                sigma: false,
                score: 0.0,
                tool_outcome: None,
                em_baseline: em,
                em_final: em,
                reader_backend: reader.backend().to_string(),
                tool_source: "none".into(),
            }
        })
        .collect();
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{CmpOp, Expr};
    use crate::reader::ToyReader;

    fn long_lookup() -> QAInstance {
        let rows: Vec<Vec<String>> = (0..120)
            .map(|i| vec![format!("player {i}"), format!("team {}", i % 7), (i * 3).to_string()])
            .collect();
        let table = Table::new("t", vec!["Name".into(), "Team".into(), "Points".into()], rows).unwrap();
        QAInstance {
            id: "long".into(),
            question: "what is the value of Points where Name == 'player 110'".into(),
            table,
            gold_answers: vec!["330".into()],
            gold_predicate: Some(Expr::compare(
                CmpOp::Eq,
                Expr::column("Name"),
                Expr::str("player 110"),
            )),
        }
    }

    fn pipeline(tool: ToolSource, kind: DetectorKind) -> Pipeline {
        let mut p = Pipeline::new(Arc::new(ToyReader), tool, DetectorModel::fixed(kind));
        p.budget_tokens = 300;
        p
    }

    #[test]
    fn never_keeps_the_baseline() {
        let rec = pipeline(ToolSource::Gold, DetectorKind::Never).run_instance(&long_lookup());
        assert!(!rec.sigma);
        assert!(rec.tool_outcome.is_none());
        assert_eq!(rec.final_prediction, rec.baseline_prediction);
    }

    #[test]
    fn gold_filter_recovers_truncated_row() {
        let rec = pipeline(ToolSource::Gold, DetectorKind::Always).run_instance(&long_lookup());
        assert!(!rec.em_baseline);
        assert!(rec.em_final);
        assert_eq!(rec.final_answer(), Some("330"));
        let filter = rec.tool_outcome.unwrap().filter.unwrap();
        assert!(filter.applied);
        assert_eq!(filter.rows_after, 1);
    }

    #[test]
    fn empty_filter_reverts_to_baseline() {
        let mut inst = long_lookup();
        inst.gold_predicate = Some(Expr::compare(CmpOp::Eq, Expr::column("Name"), Expr::str("nobody")));
        let rec = pipeline(ToolSource::Gold, DetectorKind::Always).run_instance(&inst);
        let outcome = rec.tool_outcome.as_ref().unwrap();
        assert_eq!(outcome.filter.as_ref().unwrap().revert_reason, RevertReason::EmptyResult);
        assert_eq!(rec.final_prediction, rec.baseline_prediction);
    }

    #[test]
    fn oracle_fires_only_on_wrong_baselines() {
        let rec = pipeline(ToolSource::Identity, DetectorKind::Oracle).run_instance(&long_lookup());
        assert!(rec.sigma);
        let mut short = long_lookup();
        short.table = short.table.head(5);
        short.question = "what is the value of Points where Name == 'player 2'".into();
        short.gold_answers = vec!["6".into()];
        let rec = pipeline(ToolSource::Identity, DetectorKind::Oracle).run_instance(&short);
        assert!(rec.em_baseline && !rec.sigma);
    }

    #[test]
    fn missing_gold_predicate_is_a_generation_failure() {
        let mut inst = long_lookup();
        inst.gold_predicate = None;
        let rec = pipeline(ToolSource::Gold, DetectorKind::Always).run_instance(&inst);
        let outcome = rec.tool_outcome.unwrap();
        assert_eq!(outcome.generation_failure.unwrap().kind(), "unavailable");
        assert_eq!(rec.final_prediction, rec.baseline_prediction);
    }

    #[test]
    fn force_tool_keeps_sigma_zero_answers() {
        let mut p = pipeline(ToolSource::Gold, DetectorKind::Never);
        p.force_tool = true;
        let rec = p.run_instance(&long_lookup());
        assert!(!rec.sigma);
        assert_eq!(rec.em_tool(), Some(true));
        assert!(!rec.em_final);
    }

    #[test]
    fn random_tool_is_seeded_per_instance() {
        let p = pipeline(
            ToolSource::Random {
                fraction: 0.5,
                seed: 3,
            },
            DetectorKind::Always,
        );
        let a = p.run_instance(&long_lookup());
        let b = p.run_instance(&long_lookup());
        assert_eq!(a, b);
        assert_eq!(a.tool_outcome.unwrap().filter.unwrap().rows_after, 60);
    }
}
