//! Per-episode head fitting and query prediction.
//!
//! Gradient-based methods start from prototype weights (class means of the
//! support vectors, zero bias) and run a fixed number of full-batch Adam
//! steps on [`losses::objective`]. Training only ever sees a [`Task`], so
//! query labels are out of reach by construction.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{self, HeadGradient, LossError, Method, MethodSpec, ProbabilityMatrix, SoftmaxHead};
use crate::matrix::{squared_distance, Matrix};
use crate::sampler::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("non-finite loss {value} at step {step} while training {method}")]
    NonFiniteLoss { step: usize, method: Method, value: f64 },
    #[error("invalid optimizer settings: {0}")]
    InvalidConfig(String),
    #[error("method {0} is not trained by gradient descent")]
    UnsupportedMethod(Method),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.iterations == 0 {
            return Err(TrainError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(TrainError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(TrainError::InvalidConfig("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Predictions for the query set of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePrediction {
    pub predicted: Vec<usize>,
    pub probabilities: ProbabilityMatrix,
    /// Wall-clock seconds spent fitting; excluded from equality-sensitive
    /// comparisons by callers.
    pub train_seconds: f64,
}

impl EpisodePrediction {
    fn from_probabilities(probabilities: ProbabilityMatrix, train_seconds: f64) -> Self {
        Self {
            predicted: probabilities.argmax(),
            probabilities,
            train_seconds,
        }
    }
}

/// A fitted head with its prediction and the objective value before each
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub head: SoftmaxHead,
    pub prediction: EpisodePrediction,
    pub losses: Vec<f64>,
}

/// Class means of the support vectors.
pub fn prototypes(task: &Task) -> Matrix {
    let mut sums = Matrix::zeros(task.ways(), task.dim());
    let mut counts = vec![0usize; task.ways()];
    for (x, &y) in task.support().iter_rows().zip(task.support_labels()) {
        counts[y] += 1;
        for (s, v) in sums.row_mut(y).iter_mut().zip(x) {
            *s += v;
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        let n = n as f64;
        sums.row_mut(k).iter_mut().for_each(|s| *s /= n);
    }
    sums
}

/// Prototype weights, zero bias.
pub fn init_head(task: &Task) -> SoftmaxHead {
    SoftmaxHead::new(prototypes(task), vec![0.0; task.ways()]).expect("prototype head is well formed")
}

struct Adam {
    cfg: OptimizerConfig,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(cfg: OptimizerConfig, params: usize) -> Self {
        Self {
            cfg,
            step: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    fn update(&mut self, head: &mut SoftmaxHead, grad: &HeadGradient) {
        self.step += 1;
        let c = &self.cfg;
        let bias1 = 1.0 - c.adam_beta1.powi(self.step);
        let bias2 = 1.0 - c.adam_beta2.powi(self.step);
        let (weights, bias) = head.params_mut();
        let params = weights.iter_mut().chain(bias.iter_mut());
        let grads = grad.weights.as_slice().iter().chain(&grad.bias);
        for (((p, &g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = c.adam_beta1 * *m + (1.0 - c.adam_beta1) * g;
            *v = c.adam_beta2 * *v + (1.0 - c.adam_beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.adam_eps);
        }
    }
}

fn fit(
    task: &Task,
    mut head: SoftmaxHead,
    spec: &MethodSpec,
    opt: &OptimizerConfig,
) -> Result<(SoftmaxHead, Vec<f64>), TrainError> {
    if !spec.method.is_gradient_based() {
        return Err(TrainError::UnsupportedMethod(spec.method));
    }
    spec.validate()?;
    opt.validate()?;
    let mut adam = Adam::new(*opt, head.ways() * (head.dim() + 1));
    let mut trace = Vec::with_capacity(opt.iterations);
    for step in 0..opt.iterations {
        let (loss, grad) = losses::evaluate(&head, task, spec, true)?;
        let grad = grad.expect("gradient requested");
        if !loss.is_finite() || !grad.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step,
                method: spec.method,
                value: loss,
            });
        }
        trace.push(loss);
        adam.update(&mut head, &grad);
    }
    Ok((head, trace))
}

/// Fits a head for CE, H, I or FR and records the loss trajectory.
pub fn train_head_traced(task: &Task, spec: &MethodSpec, opt: &OptimizerConfig) -> Result<TrainTrace, TrainError> {
    let start = Instant::now();
    let (head, losses) = fit(task, init_head(task), spec, opt)?;
    let seconds = start.elapsed().as_secs_f64();
    let probs = losses::forward(&head, task.query())?;
    Ok(TrainTrace {
        head,
        prediction: EpisodePrediction::from_probabilities(probs, seconds),
        losses,
    })
}

pub fn train_head(
    task: &Task,
    spec: &MethodSpec,
    opt: &OptimizerConfig,
) -> Result<(SoftmaxHead, EpisodePrediction), TrainError> {
    train_head_traced(task, spec, opt).map(|t| (t.head, t.prediction))
}

/// Nearest class mean: softmax over negative squared Euclidean distances to
/// the support prototypes.
pub fn prototypical_predict(task: &Task) -> EpisodePrediction {
    let start = Instant::now();
    let protos = prototypes(task);
    let mut logits = Matrix::zeros(task.query().rows(), task.ways());
    for (i, x) in task.query().iter_rows().enumerate() {
        for (k, z) in logits.row_mut(i).iter_mut().enumerate() {
            *z = -squared_distance(x, protos.row(k));
        }
    }
    let probs = losses::softmax_rows(logits);
    EpisodePrediction::from_probabilities(probs, start.elapsed().as_secs_f64())
}

/// Two-step self-training: cross-entropy on the support set, pseudo-label
/// the queries by arg-max, then refit from the support prototypes with
/// cross-entropy on support and pseudo-labeled queries, equally weighted.
pub fn ssl_train(task: &Task, opt: &OptimizerConfig) -> Result<(SoftmaxHead, EpisodePrediction), TrainError> {
    let start = Instant::now();
    let ce = MethodSpec::new(Method::CrossEntropy);
    let (first, _) = fit(task, init_head(task), &ce, opt)?;
    let pseudo = losses::forward(&first, task.query())?.argmax();
    let combined = pseudo_labeled_task(task, &pseudo);
    let (head, _) = fit(&combined, init_head(task), &ce, opt)?;
    let seconds = start.elapsed().as_secs_f64();
    let probs = losses::forward(&head, task.query())?;
    Ok((head, EpisodePrediction::from_probabilities(probs, seconds)))
}

/// Support rows followed by query rows labeled with `pseudo`, with an empty
/// query set.
pub fn pseudo_labeled_task(task: &Task, pseudo: &[usize]) -> Task {
    let rows = task
        .support()
        .vstack(task.query())
        .expect("support and query share a dimension");
    let labels = task.support_labels().iter().chain(pseudo).copied().collect();
    Task::new(task.ways(), rows, labels, Matrix::zeros(0, task.dim())).expect("support already covers every class")
}

/// Dispatches any method, PT and SSL included.
pub fn run_method(task: &Task, spec: &MethodSpec, opt: &OptimizerConfig) -> Result<EpisodePrediction, TrainError> {
    match spec.method {
        Method::Prototypical => Ok(prototypical_predict(task)),
        Method::SelfTraining => ssl_train(task, opt).map(|(_, p)| p),
        _ => train_head(task, spec, opt).map(|(_, p)| p),
    }
}
