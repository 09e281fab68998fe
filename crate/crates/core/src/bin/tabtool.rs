use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tabtool::detector::DetectorKind;
use tabtool::eval::{
    baseline_command, fuzz_command, report_command, run_command, subset_command,
    train_detector_command, write_instances, write_outputs, DatasetKind, GeneratorKind, RunConfig,
    RunError, RunOutput, REFERENCE_SUBSET_SIZE,
};
use tabtool::reader::ReaderBackend;

#[derive(Parser)]
#[command(name = "tabtool", version, about = "Row-filter tools for table question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: baseline, detector, tool, re-prediction.
    Run(Common),
    /// Reader only.
    Baseline(Common),
    /// Compute tool outcomes for every instance.
    ForceTool(Common),
    /// Fit a linear detector on baseline outcomes of the dataset.
    TrainDetector {
        #[command(flatten)]
        common: Common,
        /// Fit the threshold on forced tool outcomes of the same data.
        #[arg(long)]
        tune: bool,
    },
    /// Re-score recorded outcomes under every detector policy.
    Report {
        #[command(flatten)]
        common: Common,
        /// Re-score this trace instead of replaying backends.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build the filter subset from SQL annotations.
    Subset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Round-trip property check of the filter language.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Wtq,
    Wikisql,
    Synthetic,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReaderArg {
    Remote,
    Replay,
    Toy,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Remote,
    Heuristic,
    Replay,
    Gold,
    Random,
    Identity,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Never,
    Always,
    Oracle,
    Seqlogprob,
    Combined,
}

/// Flags shared by the dataset commands; each overrides `--config`.
#[derive(Args, Clone)]
struct Common {
    /// JSON file with the same settings as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    #[arg(long, value_enum)]
    reader: Option<ReaderArg>,
    #[arg(long, value_enum)]
    generator: Option<GeneratorArg>,
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    /// Trained detector JSON for the linear detectors.
    #[arg(long)]
    detector_model: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    budget_tokens: Option<usize>,
    /// Row-count bucket edges, e.g. `30,60`.
    #[arg(long, value_delimiter = ',')]
    buckets: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Synthetic dataset size.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    wtq_tsv: Option<PathBuf>,
    #[arg(long)]
    wtq_root: Option<PathBuf>,
    #[arg(long)]
    wikisql_questions: Option<PathBuf>,
    #[arg(long)]
    wikisql_tables: Option<PathBuf>,
    #[arg(long)]
    instances_jsonl: Option<PathBuf>,
    /// Restrict the dataset to its filter subset.
    #[arg(long)]
    squall: Option<PathBuf>,
    #[arg(long)]
    reader_endpoint: Option<String>,
    #[arg(long)]
    generator_endpoint: Option<String>,
    /// Environment variable holding the completion API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = self.dataset {
            cfg.dataset.kind = match d {
                DatasetArg::Wtq => DatasetKind::Wtq,
                DatasetArg::Wikisql => DatasetKind::Wikisql,
                DatasetArg::Synthetic => DatasetKind::Synthetic,
                DatasetArg::Jsonl => DatasetKind::Jsonl,
            };
        }
        if let Some(r) = self.reader {
            cfg.reader.backend = match r {
                ReaderArg::Remote => ReaderBackend::Remote,
                ReaderArg::Replay => ReaderBackend::Replay,
                ReaderArg::Toy => ReaderBackend::Toy,
            };
        }
        if let Some(g) = self.generator {
            cfg.generator = match g {
                GeneratorArg::Remote => GeneratorKind::Remote,
                GeneratorArg::Heuristic => GeneratorKind::Heuristic,
                GeneratorArg::Replay => GeneratorKind::Replay,
                GeneratorArg::Gold => GeneratorKind::Gold,
                GeneratorArg::Random => GeneratorKind::Random,
                GeneratorArg::Identity => GeneratorKind::Identity,
                GeneratorArg::Adversarial => GeneratorKind::Adversarial,
            };
        }
        if let Some(d) = self.detector {
            cfg.detector = match d {
                DetectorArg::Never => DetectorKind::Never,
                DetectorArg::Always => DetectorKind::Always,
                DetectorArg::Oracle => DetectorKind::Oracle,
                DetectorArg::Seqlogprob => DetectorKind::SeqlogprobOnly,
                DetectorArg::Combined => DetectorKind::Combined,
            };
        }
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                *slot = value.clone();
            }
        }
        set_opt(&mut cfg.detector_model, &self.detector_model);
        set_opt(&mut cfg.threshold, &self.threshold);
        set(&mut cfg.budget_tokens, &self.budget_tokens);
        set(&mut cfg.buckets, &self.buckets);
        set(&mut cfg.seed, &self.seed);
        set_opt(&mut cfg.cache_dir, &self.cache_dir);
        set_opt(&mut cfg.out, &self.out);
        set(&mut cfg.workers, &self.workers);
        set(&mut cfg.dataset.synthetic.instances, &self.instances);
        set_opt(&mut cfg.dataset.wtq_tsv, &self.wtq_tsv);
        set_opt(&mut cfg.dataset.wtq_root, &self.wtq_root);
        set_opt(&mut cfg.dataset.wikisql_questions, &self.wikisql_questions);
        set_opt(&mut cfg.dataset.wikisql_tables, &self.wikisql_tables);
        set_opt(&mut cfg.dataset.instances_jsonl, &self.instances_jsonl);
        set_opt(&mut cfg.dataset.squall, &self.squall);
        set_opt(&mut cfg.reader.endpoint_url, &self.reader_endpoint);
        set_opt(&mut cfg.completion.endpoint_url, &self.generator_endpoint);
        set_opt(&mut cfg.completion.api_key_env, &self.api_key_env);
        set_opt(&mut cfg.reader.api_key_env, &self.api_key_env);
        set_opt(&mut cfg.completion.model, &self.model);
        Ok(cfg)
    }
}

fn emit(cfg: &RunConfig, output: &RunOutput) -> Result<(), RunError> {
    let r = &output.report;
    match &cfg.out {
        Some(out) => {
            write_outputs(out, output)?;
            println!(
                "instances={} em_baseline={:.4} em_toolwriter={:.4} em_oracle_headroom={:.4} report={}",
                r.dataset_size,
                r.em_baseline,
                r.em_toolwriter,
                r.em_oracle_headroom,
                out.display()
            );
        }
        None => print!("{}", r.to_json()),
    }
    if output.skipped > 0 {
        eprintln!("skipped {} malformed instances", output.skipped);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config()?;
            emit(&cfg, &run_command(&cfg)?)?;
        }
        Command::ForceTool(common) => {
            let cfg = RunConfig {
                force_tool: true,
                ..common.config()?
            };
            emit(&cfg, &run_command(&cfg)?)?;
        }
        Command::Baseline(common) => {
            let cfg = common.config()?;
            emit(&cfg, &baseline_command(&cfg)?)?;
        }
        Command::Report { common, trace } => {
            let cfg = common.config()?;
            emit(&cfg, &report_command(&cfg, trace.as_deref())?)?;
        }
        Command::TrainDetector { common, tune } => {
            let mut cfg = common.config()?;
            if !cfg.detector.is_linear() {
                cfg.detector = DetectorKind::Combined;
            }
            let model = train_detector_command(&cfg, cfg.detector, tune)?;
            match &cfg.out {
                Some(out) => {
                    model.save(out)?;
                    println!("kind={} threshold={} model={}", model.kind.as_str(), model.threshold, out.display());
                }
                None => println!("{}", model.to_json()),
            }
        }
        Command::Subset { common, annotations } => {
            let cfg = common.config()?;
            let subset = subset_command(&cfg, &annotations)?;
            let out = cfg.out.clone().unwrap_or_else(|| Path::new("subset.jsonl").to_path_buf());
            write_instances(&out, &subset.instances)?;
            println!(
                "kept={} (reference size {REFERENCE_SUBSET_SIZE}) untranslatable={} excluded={} unannotated={} out={}",
                subset.instances.len(),
                subset.untranslatable.len(),
                subset.excluded,
                subset.unannotated,
                out.display()
            );
        }
        Command::Fuzz { cases, depth, seed } => {
            let summary = fuzz_command(cases, depth, seed);
            println!(
                "trees={} sources={} failures={}",
                summary.trees_checked,
                summary.sources_checked,
                summary.failures.len()
            );
            for failure in summary.failures.iter().take(20) {
                eprintln!("{failure}");
            }
            if !summary.failures.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
