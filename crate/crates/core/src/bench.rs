//! Deterministic parallel episode runner.
//!
//! Episodes are generated by index and trained independently on a worker
//! pool; results are collected in index order, so the report does not
//! depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{Method, MethodSpec};
use crate::metrics::{self, BenchmarkReport, EpisodeResult, MetricsError};
use crate::sampler::{episode_stream, EpisodeStream, SamplerError};
use crate::store::LabeledCorpus;
use crate::trainer::{self, OptimizerConfig, TrainError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("episode {episode}: {source}")]
    Train {
        episode: u64,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Everything that determines a benchmark's results, echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub tool_version: String,
    pub embeddings: String,
    pub normalize: bool,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub episodes: u64,
    pub seed: u64,
    pub method: Method,
    pub lambda: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl BenchConfig {
    pub fn method_spec(&self) -> MethodSpec {
        MethodSpec {
            method: self.method,
            lambda: self.lambda,
            alpha: self.alpha,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            ..OptimizerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.method_spec()
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        self.optimizer()
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn stream<'a>(&self, corpus: &'a LabeledCorpus) -> Result<EpisodeStream<'a>, SamplerError> {
        episode_stream(corpus, self.ways, self.shots, self.queries, self.episodes, self.seed)
    }

    #[cfg(test)]
    pub(crate) fn for_tests(method: Method) -> Self {
        Self {
            tool_version: "test".into(),
            embeddings: "memory".into(),
            normalize: true,
            ways: 5,
            shots: 5,
            queries: 15,
            episodes: 1,
            seed: 0,
            method,
            lambda: 1.0,
            alpha: 1.0,
            iterations: 150,
            learning_rate: 1e-3,
        }
    }
}

/// Trains and scores every episode; results come back in index order.
pub fn run_episodes(
    corpus: &LabeledCorpus,
    config: &BenchConfig,
    workers: usize,
) -> Result<Vec<EpisodeResult>, BenchError> {
    config.validate()?;
    let stream = config.stream(corpus)?;
    let spec = config.method_spec();
    let opt = config.optimizer();

    let run_one = |i: u64| -> Result<EpisodeResult, BenchError> {
        let episode = stream.episode(i);
        let prediction = trainer::run_method(episode.task(), &spec, &opt)
            .map_err(|source| BenchError::Train { episode: i, source })?;
        let (f1, acc) = metrics::score(&prediction, episode.query_labels_hidden(), episode.task().ways())?;
        Ok(EpisodeResult {
            episode_index: i,
            method: spec.method,
            macro_f1: f1,
            accuracy: acc,
            train_seconds: prediction.train_seconds,
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let results: Vec<Result<EpisodeResult, BenchError>> =
        pool.install(|| (0..config.episodes).into_par_iter().map(run_one).collect());
    results.into_iter().collect()
}

pub fn run_benchmark(
    corpus: &LabeledCorpus,
    config: &BenchConfig,
    workers: usize,
) -> Result<BenchmarkReport, BenchError> {
    let results = run_episodes(corpus, config, workers)?;
    Ok(metrics::aggregate(config.clone(), results)?)
}
