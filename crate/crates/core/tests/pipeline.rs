use std::process::Command;
use std::sync::Arc;

use tabtool::detector::{extract_features, train_detector, DetectorKind, DetectorModel};
use tabtool::eval::{
    build_report, synthetic_dataset, trace_jsonl, Pipeline, RunRecord, SyntheticConfig, ToolSource,
};
use tabtool::reader::{Reader, ToyReader};
use tabtool::table::Table;
use tabtool::toolgen::{HeuristicGenerator, RandomPredicateGenerator};

fn data(n: usize, seed: u64) -> Vec<tabtool::eval::QAInstance> {
    synthetic_dataset(&SyntheticConfig {
        instances: n,
        seed,
        ..SyntheticConfig::default()
    })
}

fn run(tool: ToolSource, detector: DetectorModel, workers: usize) -> Vec<RunRecord> {
    let mut p = Pipeline::new(Arc::new(ToyReader), tool, detector);
    p.workers = workers;
    p.run(&data(120, 4)).0
}

fn trained() -> DetectorModel {
    let records = run(ToolSource::Gold, DetectorModel::fixed(DetectorKind::Never), 2);
    let training: Vec<_> = records
        .iter()
        .filter_map(|r| r.features.map(|f| (f, !r.em_baseline)))
        .collect();
    train_detector(&training, DetectorKind::Combined).unwrap()
}

#[test]
fn final_answer_follows_sigma() {
    let model = trained();
    let tools = [
        ToolSource::Gold,
        ToolSource::Generator(Arc::new(HeuristicGenerator)),
        ToolSource::Generator(Arc::new(RandomPredicateGenerator::new(1))),
    ];
    for tool in tools {
        for r in run(tool, model.clone(), 2) {
            if r.sigma {
                let t = r.tool_outcome.as_ref().expect("tool outcome when sigma = 1");
                assert_eq!(r.final_prediction, t.prediction);
                assert_eq!(r.em_final, t.em);
                let reverted = t.filter.as_ref().is_none_or(|f| !f.applied);
                if reverted {
                    assert_eq!(r.final_prediction, r.baseline_prediction);
                }
            } else {
                assert!(r.tool_outcome.is_none());
                assert_eq!(r.final_prediction, r.baseline_prediction);
                assert_eq!(r.em_final, r.em_baseline);
            }
        }
    }
}

#[test]
fn worker_count_does_not_change_records() {
    let one = run(ToolSource::Gold, trained(), 1);
    let many = run(ToolSource::Gold, trained(), 6);
    assert_eq!(trace_jsonl(&one), trace_jsonl(&many));
}

#[test]
fn buckets_and_partitions_match_hand_counts() {
    let instances = data(120, 4);
    let records = run(ToolSource::Gold, DetectorModel::fixed(DetectorKind::Oracle), 3);
    let report = build_report(&records, &[30, 60], &[], serde_json::Value::Null);

    let mut expected = [0usize; 3];
    for inst in &instances {
        let n = inst.table.num_rows();
        expected[if n < 30 { 0 } else if n < 60 { 1 } else { 2 }] += 1;
    }
    let counts: Vec<usize> = report.buckets.iter().map(|b| b.count).collect();
    assert_eq!(counts, expected.to_vec());

    let correct = records.iter().filter(|r| r.em_baseline).count();
    assert_eq!(report.partition.s_f, correct);
    assert_eq!(report.partition.s_f + report.partition.s_bar_f, instances.len());
    assert!((report.em_baseline - correct as f64 / instances.len() as f64).abs() < 1e-12);
    assert!(report.em_oracle_headroom >= report.em_baseline);
}

#[test]
fn confident_toy_features() {
    let t = Table::new(
        "t",
        vec!["Name".into(), "Team".into()],
        (0..10).map(|i| vec![format!("p{i}"), "x".into()]).collect(),
    )
    .unwrap();
    let p = ToyReader.predict("how many rows?", &t, 1024).unwrap();
    let f = extract_features(&t, &p).unwrap();
    assert!((f.seq_log_prob - -0.1).abs() < 1e-12);
    assert_eq!(f.row_count, 10);
}

fn tabtool(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tabtool")).args(args).output().unwrap()
}

#[test]
fn cli_subcommands_exist() {
    for sub in ["run", "baseline", "force-tool", "train-detector", "report", "subset", "fuzz"] {
        let out = tabtool(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
    }
}

#[test]
fn cli_train_then_run_with_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("detector.json");
    let model_arg = model.to_str().unwrap();
    let out = tabtool(&["train-detector", "--instances", "80", "--generator", "gold", "--tune", "--out", model_arg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = DetectorModel::load(&model).unwrap();
    assert_eq!(loaded.kind, DetectorKind::Combined);

    let report = dir.path().join("r/report.json");
    let out = tabtool(&[
        "run", "--instances", "80", "--seed", "9", "--generator", "gold", "--detector", "combined",
        "--detector-model", model_arg, "--buckets", "25,50,75", "--out", report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/report.buckets.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let trace = std::fs::read_to_string(dir.path().join("r/report.trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 80);
    assert!(dir.path().join("r/report.meta.json").exists());
}

#[test]
fn cli_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"generator": "identity", "detector": "always", "dataset": {"synthetic": {"instances": 7}}}"#).unwrap();
    let out = tabtool(&["run", "--config", config.to_str().unwrap(), "--instances", "5"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["dataset_size"], 5);
    assert_eq!(report["config"]["generator"], "identity");
    assert_eq!(report["tool_applications"], 5);
}

#[test]
fn cli_fuzz_reports_counts() {
    let out = tabtool(&["fuzz", "--cases", "50", "--seed", "3"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "trees=50 sources=50 failures=0");
}
