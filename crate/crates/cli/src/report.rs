//! `fewshot report`: one row per benchmark report, best mean F1 first.

use std::fmt::Write;
use std::fs;
use std::path::PathBuf;

use fewshot_core::metrics::BenchmarkReport;
use serde_json::Value;

use crate::args::{ReportArgs, TableFormat};
use crate::error::CliError;

/// Config fields shown per row rather than in the header.
const ROW_FIELDS: [&str; 3] = ["method", "lambda", "alpha"];

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<BenchmarkReport>, CliError> {
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: not a benchmark report: {e}", p.display())))
        })
        .collect()
}

/// Refuses to put reports with different episode shapes side by side.
pub fn check_compatible(reports: &[BenchmarkReport]) -> Result<(), CliError> {
    let Some(first) = reports.first() else {
        return Err(CliError::validation("no reports given"));
    };
    for r in &reports[1..] {
        let (a, b) = (&first.config, &r.config);
        if (a.ways, a.shots) != (b.ways, b.shots) {
            return Err(CliError::validation(format!(
                "incompatible reports: {}-way {}-shot vs {}-way {}-shot",
                a.ways, a.shots, b.ways, b.shots
            )));
        }
    }
    Ok(())
}

/// Stable sort by mean F1, descending.
pub fn sorted(mut reports: Vec<BenchmarkReport>) -> Vec<BenchmarkReport> {
    reports.sort_by(|a, b| b.mean_f1.total_cmp(&a.mean_f1));
    reports
}

fn method_label(r: &BenchmarkReport) -> String {
    r.config.method.to_string()
}

pub fn csv(reports: &[BenchmarkReport]) -> String {
    let mut out = String::from("method,lambda,alpha,mean_f1,ci95,mean_seconds,episodes\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            method_label(r),
            r.config.lambda,
            r.config.alpha,
            r.mean_f1,
            r.ci95,
            r.mean_seconds,
            r.config.episodes
        )
        .unwrap();
    }
    out
}

/// Config fields common to the table, with differing values listed in
/// report order.
fn config_echo(reports: &[BenchmarkReport]) -> Vec<(String, String)> {
    let configs: Vec<Value> = reports
        .iter()
        .map(|r| serde_json::to_value(&r.config).expect("config serializes"))
        .collect();
    let Some(Value::Object(first)) = configs.first() else {
        return Vec::new();
    };
    first
        .keys()
        .filter(|k| !ROW_FIELDS.contains(&k.as_str()))
        .map(|key| {
            let mut values: Vec<String> = Vec::new();
            for c in &configs {
                let v = match &c[key] {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                if !values.contains(&v) {
                    values.push(v);
                }
            }
            (key.clone(), values.join(", "))
        })
        .collect()
}

pub fn markdown(reports: &[BenchmarkReport]) -> String {
    let mut out = String::from("# Benchmark comparison\n\n");
    for (key, value) in config_echo(reports) {
        writeln!(out, "- {key}: {value}").unwrap();
    }
    out.push_str("\n| method | lambda | alpha | mean_f1 | ci95 | mean_seconds |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for r in reports {
        writeln!(
            out,
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} |",
            method_label(r),
            r.config.lambda,
            r.config.alpha,
            r.mean_f1,
            r.ci95,
            r.mean_seconds
        )
        .unwrap();
    }
    out
}

pub fn run(args: &ReportArgs) -> Result<String, CliError> {
    let reports = load_reports(&args.inputs)?;
    check_compatible(&reports)?;
    let reports = sorted(reports);
    let table = match args.format {
        TableFormat::Csv => csv(&reports),
        TableFormat::Md => markdown(&reports),
    };
    match &args.out {
        Some(path) => {
            fs::write(path, &table).map_err(|e| CliError::io(path, e))?;
            Ok(format!("{} rows -> {}", reports.len(), path.display()))
        }
        None => Ok(table.trim_end().to_string()),
    }
}
