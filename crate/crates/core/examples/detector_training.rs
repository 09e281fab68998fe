//! Train, tune and persist a baseline-failure detector.
//!
//! cargo run --example detector_training

use std::sync::Arc;

use tabtool::detector::{tune_threshold, train_detector, DetectorKind, DetectorModel, TuneRecord};
use tabtool::eval::{synthetic_dataset, Pipeline, SyntheticConfig, ToolSource};
use tabtool::reader::ToyReader;

fn main() {
    let data = |seed| synthetic_dataset(&SyntheticConfig { instances: 150, seed, ..SyntheticConfig::default() });

    // Force the tool so every record carries both outcomes.
    let mut pipeline = Pipeline::new(Arc::new(ToyReader), ToolSource::Gold, DetectorModel::fixed(DetectorKind::Never));
    pipeline.force_tool = true;
    let (train, _) = pipeline.run(&data(1));
    let (dev, _) = pipeline.run(&data(2));

    let labelled: Vec<_> = train.iter().filter_map(|r| r.features.map(|f| (f, !r.em_baseline))).collect();
    let tune: Vec<TuneRecord> = dev
        .iter()
        .filter_map(|r| {
            Some(TuneRecord { features: r.features?, em_baseline: r.em_baseline, em_tool: r.em_tool()? })
        })
        .collect();

    for kind in [DetectorKind::SeqlogprobOnly, DetectorKind::Combined] {
        let model = train_detector(&labelled, kind).unwrap();
        let tau = tune_threshold(&model, &tune);
        let model = model.with_threshold(tau).unwrap();
        let fired = tune.iter().filter(|r| model.decide(&r.features).unwrap().sigma).count();
        println!(
            "{:<11} weights=[{:+.3}, {:+.3}] bias={:+.3} tau={:.3} fires on {fired}/{} dev records",
            kind.as_str(),
            model.weights[0],
            model.weights[1],
            model.bias,
            tau,
            tune.len()
        );
        if kind == DetectorKind::Combined {
            let path = std::env::temp_dir().join("tabtool-detector.json");
            model.save(&path).unwrap();
            let back = DetectorModel::load(&path).unwrap();
            assert_eq!(back, model);
            println!("saved to {}", path.display());
        }
    }

    // Degenerate data gives a fixed model and a warning, not an error.
    let all_wrong: Vec<_> = labelled.iter().map(|(f, _)| (*f, true)).collect();
    let fallback = train_detector(&all_wrong, DetectorKind::Combined).unwrap();
    println!("single class -> {} ({:?})", fallback.kind.as_str(), fallback.training_meta.unwrap().warning);
}
