//! End-to-end run over the synthetic dataset with several tool sources.
//!
//! cargo run --example synthetic_pipeline

use std::sync::Arc;

use tabtool::detector::{DetectorKind, DetectorModel};
use tabtool::eval::{build_report, synthetic_dataset, Pipeline, SyntheticConfig, ToolSource, DEFAULT_BUCKET_EDGES};
use tabtool::reader::ToyReader;
use tabtool::toolgen::{HeuristicGenerator, RandomPredicateGenerator};

fn main() {
    let instances = synthetic_dataset(&SyntheticConfig { instances: 200, seed: 11, ..SyntheticConfig::default() });
    let sources = [
        ToolSource::Identity,
        ToolSource::Random { fraction: 0.5, seed: 11 },
        ToolSource::Generator(Arc::new(RandomPredicateGenerator::new(11))),
        ToolSource::Generator(Arc::new(HeuristicGenerator)),
        ToolSource::Gold,
    ];
    let policies = [DetectorModel::fixed(DetectorKind::Never), DetectorModel::fixed(DetectorKind::Always)];

    println!("{:<12} {:>8} {:>8} {:>9}   buckets", "tool", "baseline", "oracle", "always");
    for tool in sources {
        let name = tool.name();
        let mut pipeline = Pipeline::new(Arc::new(ToyReader), tool, DetectorModel::fixed(DetectorKind::Oracle));
        pipeline.force_tool = true;
        pipeline.workers = 4;
        let (records, _) = pipeline.run(&instances);
        let report = build_report(&records, &DEFAULT_BUCKET_EDGES, &policies, serde_json::Value::Null);
        let always = report.policies.iter().find(|p| p.detector == "always").unwrap().em;
        let buckets: Vec<String> = report
            .buckets
            .iter()
            .map(|b| format!("{}:{}/{:+.2}", b.label, b.count, b.improvement))
            .collect();
        println!(
            "{name:<12} {:>8.3} {:>8.3} {:>9.3}   {}",
            report.em_baseline,
            report.em_oracle_headroom,
            always,
            buckets.join(" ")
        );
    }
}
