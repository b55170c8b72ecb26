use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fewshot_core::Method;

#[derive(Debug, Parser)]
#[command(
    name = "fewshot",
    version,
    about = "Few-shot text classification on top of frozen embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed labeled texts through an embeddings provider.
    Embed(EmbedArgs),
    /// Run an episodic benchmark of one method on an embeddings file.
    Bench(BenchArgs),
    /// Compare benchmark reports in one table.
    Report(ReportArgs),
    /// Serve deterministic mock embeddings on a local port.
    MockServe(MockServeArgs),
    /// Write a synthetic Gaussian-mixture embeddings file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// JSONL with one {"id", "label", "text"} object per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Provider base URL; requests go to {endpoint}/v1/embeddings.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub model: String,
    /// Directory for the on-disk embedding cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_concurrent: usize,
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// ce, pt, ssl, h, mi or fr.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long)]
    pub ways: usize,
    #[arg(long)]
    pub shots: usize,
    #[arg(long, default_value_t = fewshot_core::sampler::DEFAULT_QUERIES)]
    pub queries: usize,
    #[arg(long)]
    pub episodes: u64,
    #[arg(long)]
    pub seed: u64,
    /// Weight of the transductive term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Conditional-entropy weight inside the mutual-information term.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 150)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Where to write the report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use embeddings as stored instead of L2-normalizing them.
    #[arg(long)]
    pub raw: bool,
    /// Write each episode's support/query corpus positions as JSONL.
    #[arg(long)]
    pub dump_episodes: Option<PathBuf>,
    /// Include class names in the episode dump.
    #[arg(long, requires = "dump_episodes")]
    pub export_class_names: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Md,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Md)]
    pub format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    /// 0 picks a free port.
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = fewshot_client::MOCK_DIM)]
    pub dim: usize,
    /// Answer 429 to every nth request.
    #[arg(long)]
    pub rate_limit_every: Option<usize>,
    /// Drop the last item of every response.
    #[arg(long)]
    pub truncate: bool,
    /// Shuffle the order of returned items.
    #[arg(long)]
    pub shuffle: bool,
    /// Reject requests whose bearer token differs from the API key
    /// environment variable.
    #[arg(long)]
    pub require_auth: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// RMS distance between class means in units of sigma.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}
