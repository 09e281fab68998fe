//! End-to-end evaluation: datasets, the tool-use pipeline, exact match and
//! reports.

mod data;
mod metric;
mod pipeline;
mod report;
mod runner;
mod subset;

pub use data::{
    load_instances_jsonl, load_wikisql, load_wtq, read_table_file, synthetic_dataset, unescape_wtq,
    LoadError, LoadReport, QAInstance, SyntheticConfig, SYNTHETIC_COLUMNS,
};
pub use metric::{answers_match, exact_match, normalize_answer, numeric_value, ANSWER_SEPARATOR, EM_VERSION};
pub use pipeline::{run_baseline, FilterSummary, Pipeline, RunRecord, ToolOutcome, ToolSource};
pub use report::{
    build_report, parse_trace, score_policy, trace_jsonl, Bucket, Partition, PolicyScore, RunReport,
    DEFAULT_BUCKET_EDGES,
};
pub use runner::{
    baseline_command, build_pipeline, build_tool_source, fuzz_command, load_dataset, load_detector,
    report_command, run_command, sibling, subset_command, train_detector_command, write_instances,
    write_outputs, DatasetConfig, DatasetKind, GeneratorKind, RunConfig, RunError, RunOutput,
};
pub use subset::{
    build_filter_subset, load_annotations, where_clause, SqlAnnotation, SubsetReport,
    REFERENCE_SUBSET_SIZE,
};
