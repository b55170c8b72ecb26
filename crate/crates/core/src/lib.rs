//! Episodic few-shot text classification over frozen embeddings.
//!
//! Embeddings are produced once by an external encoder and never touched
//! again. Each sampled episode fits a fresh softmax head on its support set,
//! optionally regularized by a transductive term computed on the unlabeled
//! query set, and is scored with macro-F1 on the held-out query labels.
//!
//! The crate is organized bottom-up:
//!
//! - [`store`]: load and validate labeled embedding corpora (JSONL).
//! - [`sampler`]: seeded, random-access N-shot K-way episode generation.
//! - [`losses`]: softmax head, cross-entropy, the entropy, mutual-information
//!   and Fisher-Rao regularizers, and their analytic gradients.
//! - [`trainer`]: per-episode head fitting (CE, H, I, FR), prototypes and
//!   the two-step pseudo-labeling baseline.
//! - [`metrics`]: macro-F1, accuracy and cross-episode aggregation.
//! - [`bench`]: the deterministic parallel episode runner.
//! - [`synthetic`]: Gaussian-mixture corpora and random soft predictions.

pub mod bench;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod sampler;
pub mod store;
pub mod synthetic;
pub mod trainer;

pub use losses::{Method, MethodSpec, ProbabilityMatrix, SoftmaxHead};
pub use matrix::Matrix;
pub use sampler::{Episode, EpisodeSpec, HiddenLabels, Task};
pub use store::{EmbeddingRecord, LabeledCorpus};
pub use trainer::{EpisodePrediction, OptimizerConfig};
