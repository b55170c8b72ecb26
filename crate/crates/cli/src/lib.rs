//! The `fewshot` command line: embed labeled texts, benchmark few-shot
//! methods on the embeddings, and compare the resulting reports.

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use fewshot_client::{MockConfig, MockFaults, MockProvider, API_KEY_ENV};
use fewshot_core::synthetic::{gaussian_mixture, MixtureSpec};

pub mod args;
pub mod bench;
pub mod embed;
pub mod error;
pub mod report;

use args::{Cli, Command, MockServeArgs, SynthArgs};
pub use error::CliError;

fn mock_serve(args: &MockServeArgs) -> Result<String, CliError> {
    if args.dim == 0 {
        return Err(CliError::validation("--dim must be >= 1"));
    }
    let required_key = if args.require_auth {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| CliError::validation(format!("--require-auth needs {API_KEY_ENV} to be set")))?;
        Some(key)
    } else {
        None
    };
    let config = MockConfig {
        seed: args.seed,
        dim: args.dim,
        faults: MockFaults {
            rate_limit_every: args.rate_limit_every,
            truncate: args.truncate,
            shuffle: args.shuffle,
            required_key,
            ..Default::default()
        },
    };
    let server = MockProvider::bind(&format!("127.0.0.1:{}", args.port), config)
        .map_err(|e| CliError::runtime(format!("cannot start mock provider: {e}")))?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "{}", server.port());
    let _ = stdout.flush();
    server.wait();
    Ok(String::new())
}

fn synth(args: &SynthArgs) -> Result<String, CliError> {
    if args.dim == 0 || args.classes == 0 || args.per_class == 0 {
        return Err(CliError::validation("--dim, --classes and --per-class must be >= 1"));
    }
    if !(args.sigma > 0.0 && args.sigma.is_finite() && args.separation >= 0.0 && args.separation.is_finite()) {
        return Err(CliError::validation(
            "--sigma must be positive and --separation non-negative",
        ));
    }
    let corpus = gaussian_mixture(&MixtureSpec {
        dim: args.dim,
        classes: args.classes,
        per_class: args.per_class,
        separation: args.separation,
        sigma: args.sigma,
        seed: args.seed,
    });
    corpus.save(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    Ok(format!(
        "{} records, {} classes -> {}",
        corpus.len(),
        args.classes,
        args.out.display()
    ))
}

pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Embed(a) => embed::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Report(a) => report::run(a),
        Command::MockServe(a) => mock_serve(a),
        Command::Synth(a) => synth(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Failures are reported as one JSON line on standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            0
        }
        Err(err) => {
            eprintln!("{}", err.to_json_line());
            err.exit_code()
        }
    }
}
