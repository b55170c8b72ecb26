//! `fewshot bench`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use fewshot_core::bench::{run_benchmark, BenchConfig};
use fewshot_core::metrics::BenchmarkReport;
use fewshot_core::store::{l2_normalize, load_corpus, CorpusFormat, LabeledCorpus};

use crate::args::BenchArgs;
use crate::error::CliError;

pub fn tool_version() -> String {
    format!("fewshot {}", env!("CARGO_PKG_VERSION"))
}

pub fn bench_config(args: &BenchArgs) -> BenchConfig {
    BenchConfig {
        tool_version: tool_version(),
        embeddings: args.embeddings.display().to_string(),
        normalize: !args.raw,
        ways: args.ways,
        shots: args.shots,
        queries: args.queries,
        episodes: args.episodes,
        seed: args.seed,
        method: args.method,
        lambda: args.lambda,
        alpha: args.alpha,
        iterations: args.iters,
        learning_rate: args.lr,
    }
}

pub fn load(path: &Path, normalize: bool) -> Result<LabeledCorpus, CliError> {
    let corpus = load_corpus(path, CorpusFormat::Jsonl)?;
    Ok(if normalize { l2_normalize(corpus)? } else { corpus })
}

fn dump_episodes(corpus: &LabeledCorpus, config: &BenchConfig, path: &Path, names: bool) -> Result<(), CliError> {
    let stream = config.stream(corpus)?;
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for episode in stream.iter() {
        let line = serde_json::to_string(&episode.index_lists(names)).expect("index lists serialize");
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_report(report: &BenchmarkReport, path: &Path) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| CliError::io(path, e))
}

pub fn run(args: &BenchArgs) -> Result<String, CliError> {
    if args.episodes == 0 {
        return Err(CliError::validation("--episodes must be >= 1"));
    }
    let workers = match args.workers {
        Some(0) => return Err(CliError::validation("--workers must be >= 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let config = bench_config(args);
    config.validate()?;
    let corpus = load(&args.embeddings, config.normalize)?;
    if let Some(path) = &args.dump_episodes {
        dump_episodes(&corpus, &config, path, args.export_class_names)?;
    }
    let report = run_benchmark(&corpus, &config, workers)?;
    if let Some(path) = &args.out {
        write_report(&report, path)?;
    }
    Ok(format!(
        "{} mean_f1 = {:.4} ± {:.4} over {} episodes ({}-way {}-shot, {:.4} s/episode)",
        config.method, report.mean_f1, report.ci95, config.episodes, config.ways, config.shots, report.mean_seconds
    ))
}
