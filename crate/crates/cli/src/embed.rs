//! `fewshot embed`: texts out to the provider, labels attached locally.

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::time::Duration;

use fewshot_client::{EmbeddingClient, ProviderConfig};
use fewshot_core::store::{write_records, EmbeddingRecord};
use serde_json::Value;

use crate::args::EmbedArgs;
use crate::error::CliError;

/// One validated input line.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledText {
    pub id: String,
    pub label: String,
    pub text: String,
}

/// Parses `{"id","label","text"}` lines. Blank lines are skipped but still
/// counted, so reported line numbers match the file.
pub fn parse_texts(content: &str) -> Result<Vec<LabeledText>, CliError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in content.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(line).map_err(|e| CliError::at_line(line_no, format!("invalid JSON: {e}")))?;
        let field = |name: &str| -> Result<String, CliError> {
            match value.get(name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(CliError::at_line(line_no, format!("\"{name}\" must be a string"))),
                None => Err(CliError::at_line(line_no, format!("missing \"{name}\""))),
            }
        };
        if !value.is_object() {
            return Err(CliError::at_line(line_no, "expected a JSON object"));
        }
        let item = LabeledText {
            id: field("id")?,
            label: field("label")?,
            text: field("text")?,
        };
        if !seen.insert(item.id.clone()) {
            return Err(CliError::at_line(line_no, format!("duplicate id {:?}", item.id)));
        }
        out.push(item);
    }
    if out.is_empty() {
        return Err(CliError::validation("input has no records"));
    }
    Ok(out)
}

pub fn provider_config(args: &EmbedArgs) -> Result<ProviderConfig, CliError> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(CliError::validation("--timeout must be a positive number of seconds"));
    }
    let mut cfg = ProviderConfig::from_env(args.endpoint.clone(), args.model.clone());
    cfg.batch_size = args.batch_size;
    cfg.max_concurrent = args.max_concurrent;
    cfg.max_retries = args.max_retries;
    cfg.timeout = Duration::from_secs_f64(args.timeout);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &EmbedArgs) -> Result<String, CliError> {
    let content = fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let items = parse_texts(&content)?;
    let client = EmbeddingClient::new(provider_config(args)?, args.cache.as_deref())?;

    let texts: Vec<&str> = items.iter().map(|t| t.text.as_str()).collect();
    let vectors = client.embed(&texts)?;
    let dim = vectors[0].len();

    let records: Vec<EmbeddingRecord> = items
        .into_iter()
        .zip(vectors)
        .map(|(item, vector)| EmbeddingRecord {
            id: item.id,
            label: item.label,
            vector,
            text: Some(item.text),
        })
        .collect();
    let file = fs::File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_records(&records, BufWriter::new(file)).map_err(|e| CliError::io(&args.out, e))?;
    Ok(format!(
        "embedded {} texts (d={dim}, {} requests) -> {}",
        records.len(),
        client.requests_sent(),
        args.out.display()
    ))
}
