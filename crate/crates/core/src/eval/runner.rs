//! Configuration and the command-level drivers behind the `tabtool` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cache::unix_now;
use crate::detector::{
    train_detector, tune_threshold, DetectorError, DetectorKind, DetectorModel, TuneRecord,
};
use crate::filter::fuzz::{run_round_trip, FuzzSummary};
use crate::reader::{build_reader, ReaderConfig, ReaderConfigError};
use crate::table::{FilterLimits, DEFAULT_BUDGET_TOKENS};
use crate::toolgen::{
    build_generator, ConfigError, GeneratorBackend, GeneratorConfig, RandomPredicateGenerator,
};

use super::data::{
    load_instances_jsonl, load_wikisql, load_wtq, synthetic_dataset, LoadError, LoadReport,
    QAInstance, SyntheticConfig,
};
use super::pipeline::{run_baseline, Pipeline, RunRecord, ToolSource};
use super::report::{build_report, trace_jsonl, RunReport, DEFAULT_BUCKET_EDGES};
use super::subset::{build_filter_subset, load_annotations, SubsetReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Wtq,
    Wikisql,
    Synthetic,
    /// Instances saved as JSONL, e.g. by the `subset` command.
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub wtq_tsv: Option<PathBuf>,
    /// Directory that `context` paths in the TSV are relative to.
    pub wtq_root: Option<PathBuf>,
    pub wikisql_questions: Option<PathBuf>,
    pub wikisql_tables: Option<PathBuf>,
    pub instances_jsonl: Option<PathBuf>,
    /// SQL annotations; when set, only the filter subset is kept.
    pub squall: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            wtq_tsv: None,
            wtq_root: None,
            wikisql_questions: None,
            wikisql_tables: None,
            instances_jsonl: None,
            squall: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Remote,
    Heuristic,
    Replay,
    Gold,
    Random,
    Identity,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub reader: ReaderConfig,
    pub generator: GeneratorKind,
    /// Settings for the remote, heuristic and replay generators.
    pub completion: GeneratorConfig,
    /// Share of rows dropped by the random tool.
    pub random_fraction: f64,
    pub detector: DetectorKind,
    pub detector_model: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub budget_tokens: usize,
    pub buckets: Vec<usize>,
    pub seed: u64,
    /// Holds `predictions.jsonl` and `tools.jsonl`.
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub force_tool: bool,
    pub limits: FilterLimits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            reader: ReaderConfig::default(),
            generator: GeneratorKind::Heuristic,
            completion: GeneratorConfig::default(),
            random_fraction: 0.5,
            detector: DetectorKind::Never,
            detector_model: None,
            threshold: None,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            buckets: DEFAULT_BUCKET_EDGES.to_vec(),
            seed: 0,
            cache_dir: None,
            out: None,
            workers: 1,
            force_tool: false,
            limits: FilterLimits::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Reader(#[from] ReaderConfigError),
    #[error(transparent)]
    Generator(#[from] ConfigError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, RunError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Points unset reader and generator cache paths into `cache_dir`.
    pub fn resolved(&self) -> RunConfig {
        let mut cfg = self.clone();
        if let Some(dir) = &self.cache_dir {
            cfg.reader.cache_path.get_or_insert_with(|| dir.join("predictions.jsonl"));
            cfg.completion.cache_path.get_or_insert_with(|| dir.join("tools.jsonl"));
        }
        cfg
    }

    /// The configuration as recorded in reports: output location and worker
    /// count do not affect results and are left out.
    pub fn snapshot(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("out");
            map.remove("workers");
        }
        value
    }
}

fn need<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, RunError> {
    value
        .as_deref()
        .ok_or_else(|| RunError::Invalid(format!("dataset needs {what}")))
}

pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<LoadReport, RunError> {
    let mut report = match cfg.kind {
        DatasetKind::Synthetic => LoadReport {
            instances: synthetic_dataset(&SyntheticConfig {
                seed,
                ..cfg.synthetic.clone()
            }),
            ..LoadReport::default()
        },
        DatasetKind::Wtq => {
            let tsv = need(&cfg.wtq_tsv, "wtq_tsv")?;
            let root = match &cfg.wtq_root {
                Some(root) => root.clone(),
                None => tsv
                    .parent()
                    .and_then(Path::parent)
                    .map(Path::to_path_buf)
                    .unwrap_or_default(),
            };
            load_wtq(tsv, &root)?
        }
        DatasetKind::Wikisql => load_wikisql(
            need(&cfg.wikisql_questions, "wikisql_questions")?,
            need(&cfg.wikisql_tables, "wikisql_tables")?,
        )?,
        DatasetKind::Jsonl => load_instances_jsonl(need(&cfg.instances_jsonl, "instances_jsonl")?)?,
    };
    if let Some(path) = &cfg.squall {
        let subset = build_filter_subset(&report.instances, &load_annotations(path)?);
        report.instances = subset.instances;
    }
    report.instances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

pub fn load_detector(cfg: &RunConfig) -> Result<DetectorModel, RunError> {
    let model = match cfg.detector {
        kind if kind.is_linear() => {
            let path = cfg.detector_model.as_ref().ok_or_else(|| {
                RunError::Invalid(format!("the {} detector needs a model file", kind.as_str()))
            })?;
            DetectorModel::load(path)?
        }
        kind => DetectorModel::fixed(kind),
    };
    match cfg.threshold {
        Some(t) => Ok(model.with_threshold(t)?),
        None => Ok(model),
    }
}

pub fn build_tool_source(cfg: &RunConfig) -> Result<ToolSource, RunError> {
    let generator = |backend| -> Result<ToolSource, RunError> {
        let completion = GeneratorConfig {
            backend,
            ..cfg.completion.clone()
        };
        Ok(ToolSource::Generator(Arc::from(build_generator(&completion)?)))
    };
    match cfg.generator {
        GeneratorKind::Remote => generator(GeneratorBackend::Remote),
        GeneratorKind::Heuristic => generator(GeneratorBackend::Heuristic),
        GeneratorKind::Replay => generator(GeneratorBackend::Replay),
        GeneratorKind::Gold => Ok(ToolSource::Gold),
        GeneratorKind::Identity => Ok(ToolSource::Identity),
        GeneratorKind::Random => Ok(ToolSource::Random {
            fraction: cfg.random_fraction,
            seed: cfg.seed,
        }),
        GeneratorKind::Adversarial => Ok(ToolSource::Generator(Arc::new(
            RandomPredicateGenerator::new(cfg.seed),
        ))),
    }
}

pub fn build_pipeline(cfg: &RunConfig, detector: DetectorModel) -> Result<Pipeline, RunError> {
    let cfg = cfg.resolved();
    let mut pipeline = Pipeline::new(
        Arc::from(build_reader(&cfg.reader)?),
        build_tool_source(&cfg)?,
        detector,
    );
    pipeline.budget_tokens = cfg.budget_tokens;
    pipeline.limits = cfg.limits;
    pipeline.force_tool = cfg.force_tool;
    pipeline.workers = cfg.workers;
    Ok(pipeline)
}

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<RunRecord>,
    /// Timing and provenance, kept out of the report so reports stay
    /// byte-stable.
    pub meta: Value,
    pub skipped: usize,
}

fn policies(model: &DetectorModel) -> Vec<DetectorModel> {
    let mut out: Vec<DetectorModel> = [DetectorKind::Never, DetectorKind::Always, DetectorKind::Oracle]
        .into_iter()
        .map(DetectorModel::fixed)
        .collect();
    if model.kind.is_linear() {
        out.push(model.clone());
    }
    out
}

fn meta(started: u64, clock: Instant, timings: &[(String, std::time::Duration)], skipped: usize) -> Value {
    let per_instance: BTreeMap<&str, f64> = timings
        .iter()
        .map(|(id, t)| (id.as_str(), t.as_secs_f64() * 1000.0))
        .collect();
    json!({
        "started_unix": started,
        "elapsed_ms": clock.elapsed().as_secs_f64() * 1000.0,
        "skipped_instances": skipped,
        "per_instance_ms": per_instance,
    })
}

/// The full pipeline (`run`, or `force-tool` when `cfg.force_tool`).
pub fn run_command(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let (started, clock) = (unix_now(), Instant::now());
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let detector = load_detector(cfg)?;
    let pipeline = build_pipeline(cfg, detector.clone())?;
    let (records, timings) = pipeline.run(&data.instances);
    let report = build_report(&records, &cfg.buckets, &policies(&detector), cfg.snapshot());
    Ok(RunOutput {
        report,
        records,
        meta: meta(started, clock, &timings, data.skipped),
        skipped: data.skipped,
    })
}

/// Reader-only run.
pub fn baseline_command(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let (started, clock) = (unix_now(), Instant::now());
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let reader = build_reader(&cfg.resolved().reader)?;
    let records = run_baseline(reader.as_ref(), &data.instances, cfg.budget_tokens);
    let report = build_report(&records, &cfg.buckets, &[], cfg.snapshot());
    Ok(RunOutput {
        report,
        records,
        meta: meta(started, clock, &[], data.skipped),
        skipped: data.skipped,
    })
}

/// Re-scores recorded outcomes: from a trace when given, otherwise by a
/// forced-tool pass over the configured (typically replay) backends.
pub fn report_command(cfg: &RunConfig, trace: Option<&Path>) -> Result<RunOutput, RunError> {
    let (started, clock) = (unix_now(), Instant::now());
    let detector = load_detector(cfg)?;
    let (records, timings, skipped) = match trace {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            let records = super::report::parse_trace(&text)
                .map_err(|e| RunError::Invalid(format!("{}: {e}", path.display())))?;
            (records, Vec::new(), 0)
        }
        None => {
            let data = load_dataset(&cfg.dataset, cfg.seed)?;
            let forced = RunConfig {
                force_tool: true,
                ..cfg.clone()
            };
            let (records, timings) = build_pipeline(&forced, detector.clone())?.run(&data.instances);
            (records, timings, data.skipped)
        }
    };
    let report = build_report(&records, &cfg.buckets, &policies(&detector), cfg.snapshot());
    Ok(RunOutput {
        report,
        records,
        meta: meta(started, clock, &timings, skipped),
        skipped,
    })
}

/// Trains a linear detector on the configured dataset: labels come from a
/// baseline pass, and with `tune` the threshold is fit on forced tool
/// outcomes of the same data.
pub fn train_detector_command(
    cfg: &RunConfig,
    kind: DetectorKind,
    tune: bool,
) -> Result<DetectorModel, RunError> {
    if !kind.is_linear() {
        return Err(RunError::Invalid(format!("cannot train a {} detector", kind.as_str())));
    }
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let forced = RunConfig {
        force_tool: tune,
        ..cfg.clone()
    };
    let pipeline = build_pipeline(&forced, DetectorModel::fixed(DetectorKind::Never))?;
    let (records, _) = pipeline.run(&data.instances);
    let training: Vec<_> = records
        .iter()
        .filter_map(|r| r.features.map(|f| (f, !r.em_baseline)))
        .collect();
    let model = train_detector(&training, kind)?;
    if !tune || !model.kind.is_linear() {
        return Ok(model);
    }
    let dev: Vec<TuneRecord> = records
        .iter()
        .filter_map(|r| {
            Some(TuneRecord {
                features: r.features?,
                em_baseline: r.em_baseline,
                em_tool: r.em_tool()?,
            })
        })
        .collect();
    let tau = tune_threshold(&model, &dev);
    Ok(model.with_threshold(tau)?)
}

/// Builds the filter subset of the configured dataset.
pub fn subset_command(cfg: &RunConfig, annotations: &Path) -> Result<SubsetReport, RunError> {
    let mut dataset = cfg.dataset.clone();
    dataset.squall = None;
    let data = load_dataset(&dataset, cfg.seed)?;
    Ok(build_filter_subset(&data.instances, &load_annotations(annotations)?))
}

pub fn fuzz_command(cases: usize, depth: usize, seed: u64) -> FuzzSummary {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    run_round_trip(&mut rng, cases, depth)
}

/// Sibling output path: `report.json` + `trace.jsonl` -> `report.trace.jsonl`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes the report, trace, bucket CSV and metadata next to `out`.
pub fn write_outputs(out: &Path, output: &RunOutput) -> Result<(), RunError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let files = [
        (out.to_path_buf(), output.report.to_json()),
        (sibling(out, "trace.jsonl"), trace_jsonl(&output.records)),
        (sibling(out, "buckets.csv"), output.report.buckets_csv()),
        (
            sibling(out, "meta.json"),
            serde_json::to_string_pretty(&output.meta).expect("meta serializes") + "\n",
        ),
    ];
    for (path, body) in files {
        std::fs::write(&path, body).map_err(io_error(&path))?;
    }
    Ok(())
}

pub fn write_instances(out: &Path, instances: &[QAInstance]) -> Result<(), RunError> {
    let body: String = instances
        .iter()
        .map(|i| serde_json::to_string(i).expect("instance serializes") + "\n")
        .collect();
    std::fs::write(out, body).map_err(io_error(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.synthetic.instances = 20;
        cfg
    }

    #[test]
    fn config_file_defaults_fill_in() {
        let cfg: RunConfig = serde_json::from_str(r#"{"generator": "gold", "budget_tokens": 256}"#).unwrap();
        assert_eq!(cfg.generator, GeneratorKind::Gold);
        assert_eq!(cfg.budget_tokens, 256);
        assert_eq!(cfg.buckets, vec![30, 60]);
    }

    #[test]
    fn snapshot_omits_output_location() {
        let mut cfg = small();
        cfg.out = Some("a.json".into());
        let mut other = cfg.clone();
        other.out = Some("b.json".into());
        other.workers = 4;
        assert_eq!(cfg.snapshot(), other.snapshot());
    }

    #[test]
    fn linear_detector_needs_a_model() {
        let mut cfg = small();
        cfg.detector = DetectorKind::Combined;
        assert!(matches!(load_detector(&cfg), Err(RunError::Invalid(_))));
    }

    #[test]
    fn run_and_baseline_agree_under_never() {
        let cfg = small();
        let run = run_command(&cfg).unwrap();
        let base = baseline_command(&cfg).unwrap();
        let a: Vec<_> = run.records.iter().map(|r| r.final_answer()).collect();
        let b: Vec<_> = base.records.iter().map(|r| r.final_answer()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/report.json"), "trace.jsonl"), PathBuf::from("out/report.trace.jsonl"));
    }
}
