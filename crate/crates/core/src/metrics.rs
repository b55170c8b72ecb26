//! Per-episode scores and cross-episode aggregation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchConfig;
use crate::losses::Method;
use crate::sampler::HiddenLabels;
use crate::trainer::EpisodePrediction;

/// z-score of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("label {label} out of range for {ways} classes")]
    LabelOutOfRange { label: usize, ways: usize },
    #[error("no episode results to aggregate")]
    Empty,
    #[error("results mix methods {expected} and {found}")]
    MixedMethods { expected: Method, found: Method },
    #[error("episode {0} appears more than once")]
    DuplicateEpisode(u64),
}

fn check_labels(predicted: &[usize], truth: &[usize], ways: usize) -> Result<(), MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if let Some(&label) = predicted.iter().chain(truth).find(|&&l| l >= ways) {
        return Err(MetricsError::LabelOutOfRange { label, ways });
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over `ways` classes. Undefined precision
/// or recall counts as 0.
pub fn macro_f1(predicted: &[usize], truth: &[usize], ways: usize) -> Result<f64, MetricsError> {
    check_labels(predicted, truth, ways)?;
    let mut hits = vec![0usize; ways];
    let mut predicted_count = vec![0usize; ways];
    let mut true_count = vec![0usize; ways];
    for (&p, &t) in predicted.iter().zip(truth) {
        predicted_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            hits[p] += 1;
        }
    }
    let mut total = 0.0;
    for k in 0..ways {
        total += f1_from_counts(hits[k], predicted_count[k], true_count[k]);
    }
    Ok(total / ways as f64)
}

fn f1_from_counts(hits: usize, predicted: usize, actual: usize) -> f64 {
    let precision = if predicted == 0 {
        0.0
    } else {
        hits as f64 / predicted as f64
    };
    let recall = if actual == 0 { 0.0 } else { hits as f64 / actual as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// `(macro_f1, accuracy)` of a prediction against the episode's held-out
/// query labels.
pub fn score(prediction: &EpisodePrediction, truth: &HiddenLabels, ways: usize) -> Result<(f64, f64), MetricsError> {
    let truth = truth.as_slice();
    Ok((
        macro_f1(&prediction.predicted, truth, ways)?,
        accuracy(&prediction.predicted, truth)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode_index: u64,
    pub method: Method,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub train_seconds: f64,
}

/// Serialized per-episode row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub i: u64,
    pub f1: f64,
    pub acc: f64,
    pub sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub ci95: f64,
    pub mean_seconds: f64,
    pub episodes: Vec<EpisodeRow>,
}

fn mean(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    // rounding can push the quotient a hair outside the data range
    (sum / values.len() as f64).clamp(lo, hi)
}

/// Sample standard deviation (`n - 1` denominator); 0 for a single value.
fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Aggregates results of one method, ordered by episode index regardless of
/// the order they were produced in.
pub fn aggregate(config: BenchConfig, mut results: Vec<EpisodeResult>) -> Result<BenchmarkReport, MetricsError> {
    let first = results.first().ok_or(MetricsError::Empty)?.method;
    if let Some(r) = results.iter().find(|r| r.method != first) {
        return Err(MetricsError::MixedMethods {
            expected: first,
            found: r.method,
        });
    }
    results.sort_by_key(|r| r.episode_index);
    if let Some(w) = results.windows(2).find(|w| w[0].episode_index == w[1].episode_index) {
        return Err(MetricsError::DuplicateEpisode(w[0].episode_index));
    }
    let f1: Vec<f64> = results.iter().map(|r| r.macro_f1).collect();
    let seconds: Vec<f64> = results.iter().map(|r| r.train_seconds).collect();
    let mean_f1 = mean(&f1);
    let std_f1 = sample_std(&f1, mean_f1);
    let ci95 = Z95 * std_f1 / (f1.len() as f64).sqrt();
    Ok(BenchmarkReport {
        config,
        mean_f1,
        std_f1,
        ci95,
        mean_seconds: mean(&seconds),
        episodes: results
            .into_iter()
            .map(|r| EpisodeRow {
                i: r.episode_index,
                f1: r.macro_f1,
                acc: r.accuracy,
                sec: r.train_seconds,
            })
            .collect(),
    })
}

impl BenchmarkReport {
    /// One CSV row per episode.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        writeln!(writer, "i,f1,acc,sec")?;
        for e in &self.episodes {
            writeln!(writer, "{},{},{},{}", e.i, e.f1, e.acc, e.sec)?;
        }
        writer.flush()
    }

    /// Per-episode `(index, f1)` pairs, the fields that must not depend on
    /// scheduling or hardware.
    pub fn f1_by_episode(&self) -> Vec<(u64, f64)> {
        self.episodes.iter().map(|e| (e.i, e.f1)).collect()
    }
}
