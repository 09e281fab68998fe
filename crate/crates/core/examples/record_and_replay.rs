//! Record reader predictions and tools to JSONL caches, then replay them offline.
//!
//! cargo run --example record_and_replay

use std::sync::Arc;

use tabtool::detector::{DetectorKind, DetectorModel};
use tabtool::eval::{synthetic_dataset, Pipeline, RunRecord, SyntheticConfig, ToolSource};
use tabtool::reader::{build_reader, ReaderBackend, ReaderConfig};
use tabtool::toolgen::{build_generator, GeneratorBackend, GeneratorConfig};

fn main() {
    let dir = std::env::temp_dir().join(format!("tabtool-replay-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let instances = synthetic_dataset(&SyntheticConfig { instances: 60, seed: 5, ..SyntheticConfig::default() });

    let run = |reader: ReaderBackend, generator: GeneratorBackend| {
        let reader = build_reader(&ReaderConfig {
            backend: reader,
            cache_path: Some(dir.join("predictions.jsonl")),
            ..ReaderConfig::default()
        })
        .unwrap();
        let generator = build_generator(&GeneratorConfig {
            backend: generator,
            cache_path: Some(dir.join("tools.jsonl")),
            ..GeneratorConfig::default()
        })
        .unwrap();
        let pipeline = Pipeline::new(
            Arc::from(reader),
            ToolSource::Generator(Arc::from(generator)),
            DetectorModel::fixed(DetectorKind::Always),
        );
        pipeline.run(&instances).0
    };

    let live = run(ReaderBackend::Toy, GeneratorBackend::Heuristic);
    for name in ["predictions.jsonl", "tools.jsonl"] {
        let lines = std::fs::read_to_string(dir.join(name)).unwrap().lines().count();
        println!("recorded {lines:>3} entries in {name}");
    }

    let replayed = run(ReaderBackend::Replay, GeneratorBackend::Replay);
    let answers = |rs: &[RunRecord]| rs.iter().map(|r| r.final_answer().map(str::to_string)).collect::<Vec<_>>();
    let same = answers(&live) == answers(&replayed);
    let em = |rs: &[RunRecord]| rs.iter().filter(|r| r.em_final).count();
    println!("live EM {}/{}  replay EM {}/{}  identical answers: {same}", em(&live), live.len(), em(&replayed), replayed.len());

    // A question the recording never saw is a cache miss, not a silent guess.
    let replay = build_reader(&ReaderConfig {
        backend: ReaderBackend::Replay,
        cache_path: Some(dir.join("predictions.jsonl")),
        ..ReaderConfig::default()
    })
    .unwrap();
    let err = replay.predict("a question nobody recorded", &instances[0].table, 1024).unwrap_err();
    println!("unrecorded input: {err}");
    std::fs::remove_dir_all(&dir).ok();
}
