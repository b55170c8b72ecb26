//! Softmax head, supervised and transductive losses, and their gradients.
//!
//! A head fitted on one episode minimizes
//!
//! ```text
//! L(W, b) = CE(support) - lambda * R(query)
//! ```
//!
//! where `R` is one of
//!
//! - entropy: `R_H = 1/|Q| sum_i sum_k p_ik ln p_ik` (negative mean entropy),
//! - mutual information: `R_I(a) = H(p_hat) + a * R_H`, with `p_hat` the
//!   query-averaged prediction,
//! - Fisher-Rao: `R_FR = 1/|Q| sum_i -ln sum_j sum_k sqrt(p_ik p_jk)`, the
//!   inner `j` sum running over every query row including `i`.
//!
//! `R_FR + ln|Q| <= R_I(1) <= R_I(a)` holds for every `a` in `[0, 1]`, so
//! maximizing `R_FR` pushes up a lower bound on the mutual-information
//! surrogate without a weighting parameter.
//!
//! Natural logarithms throughout. Softmax outputs are floored at
//! [`PROB_FLOOR`] and renormalized; gradients are taken through the plain
//! softmax Jacobian evaluated at the floored values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{dot, Matrix};
use crate::sampler::Task;

/// Lower bound applied to softmax outputs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-sum tolerance accepted by [`ProbabilityMatrix::from_rows`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("label {label} out of range for {ways} classes")]
    LabelOutOfRange { label: usize, ways: usize },
    #[error("invalid method settings: {0}")]
    InvalidSpec(String),
    #[error("method {0} has no differentiable objective")]
    NotAnObjective(Method),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Cross-entropy on the support set only.
    #[serde(rename = "ce")]
    CrossEntropy,
    /// Nearest class mean, no optimization.
    #[serde(rename = "pt")]
    Prototypical,
    /// Cross-entropy, pseudo-label the queries, retrain on both.
    #[serde(rename = "ssl")]
    SelfTraining,
    #[serde(rename = "h")]
    Entropy,
    #[serde(rename = "mi")]
    MutualInfo,
    #[serde(rename = "fr")]
    FisherRao,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::CrossEntropy,
        Method::Prototypical,
        Method::SelfTraining,
        Method::Entropy,
        Method::MutualInfo,
        Method::FisherRao,
    ];

    /// Short command-line name.
    pub fn key(self) -> &'static str {
        match self {
            Method::CrossEntropy => "ce",
            Method::Prototypical => "pt",
            Method::SelfTraining => "ssl",
            Method::Entropy => "h",
            Method::MutualInfo => "mi",
            Method::FisherRao => "fr",
        }
    }

    /// Whether the method is fitted by minimizing [`objective`].
    pub fn is_gradient_based(self) -> bool {
        matches!(
            self,
            Method::CrossEntropy | Method::Entropy | Method::MutualInfo | Method::FisherRao
        )
    }

    pub fn is_transductive(self) -> bool {
        matches!(
            self,
            Method::SelfTraining | Method::Entropy | Method::MutualInfo | Method::FisherRao
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::CrossEntropy => "CE",
            Method::Prototypical => "PT",
            Method::SelfTraining => "SSL",
            Method::Entropy => "H",
            Method::MutualInfo => "I",
            Method::FisherRao => "FR",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.key() == lower)
            .ok_or_else(|| format!("unknown method {s:?} (expected one of ce, pt, ssl, h, mi, fr)"))
    }
}

/// Which objective to fit and its weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    /// Weight of the transductive term.
    pub lambda: f64,
    /// Weight of the conditional-entropy part of the mutual-information term.
    pub alpha: f64,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            lambda: 1.0,
            alpha: 1.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LossError::InvalidSpec(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LossError::InvalidSpec(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Linear softmax classifier: `logits = W x + b`, `W` is `K x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    weights: Matrix,
    bias: Vec<f64>,
}

impl SoftmaxHead {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self, LossError> {
        if weights.rows() != bias.len() {
            return Err(LossError::Shape(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        if weights.as_slice().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(LossError::Shape("head parameters must be finite".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(ways: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(ways, dim),
            bias: vec![0.0; ways],
        }
    }

    pub fn ways(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    pub fn logits(&self, vectors: &Matrix) -> Result<Matrix, LossError> {
        if vectors.cols() != self.dim() {
            return Err(LossError::Shape(format!(
                "head expects dimension {}, input has {}",
                self.dim(),
                vectors.cols()
            )));
        }
        let k = self.ways();
        let mut out = Matrix::zeros(vectors.rows(), k);
        for (i, x) in vectors.iter_rows().enumerate() {
            let row = out.row_mut(i);
            for (c, z) in row.iter_mut().enumerate() {
                *z = self.bias[c] + dot(self.weights.row(c), x);
            }
        }
        Ok(out)
    }
}

/// Gradient of a scalar loss with respect to a [`SoftmaxHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    fn zeros(ways: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(ways, dim),
            bias: vec![0.0; ways],
        }
    }

    /// Accumulates `dL/dW = G^T X` and `dL/db = colsum(G)` from logit
    /// gradients `G` of the rows `X`.
    fn accumulate(&mut self, logit_grad: &Matrix, inputs: &Matrix) {
        for (g_row, x) in logit_grad.iter_rows().zip(inputs.iter_rows()) {
            for (k, &g) in g_row.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                self.bias[k] += g;
                for (w, &xv) in self.weights.row_mut(k).iter_mut().zip(x) {
                    *w += g * xv;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.as_slice().iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Row-stochastic `n x K` matrix of soft predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Matrix);

impl ProbabilityMatrix {
    /// Validates entries in `[0, 1]` and row sums within
    /// [`ROW_SUM_TOLERANCE`]. Zeros are kept as given.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LossError> {
        let m = Matrix::from_rows(rows).ok_or_else(|| LossError::Shape("ragged rows".into()))?;
        Self::from_matrix(m)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, LossError> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(LossError::Shape("probability matrix must be non-empty".into()));
        }
        for (i, row) in m.iter_rows().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(LossError::InvalidProbabilities(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(LossError::InvalidProbabilities(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(m))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn ways(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    /// Arg-max per row, ties to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.0.iter_rows().map(crate::matrix::argmax).collect()
    }

    /// Query-averaged prediction `p_hat`.
    pub fn marginal(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.ways()];
        for row in self.0.iter_rows() {
            for (a, p) in acc.iter_mut().zip(row) {
                *a += p;
            }
        }
        let n = self.rows() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Max-shifted softmax of every row, floored at [`PROB_FLOOR`] and
/// renormalized.
pub fn softmax_rows(mut logits: Matrix) -> ProbabilityMatrix {
    for i in 0..logits.rows() {
        softmax_in_place(logits.row_mut(i));
    }
    ProbabilityMatrix(logits)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in row.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    let mut clamped_sum = 0.0;
    for z in row.iter_mut() {
        *z /= sum;
        // comparison form so a NaN from overflowed logits survives
        if *z < PROB_FLOOR {
            *z = PROB_FLOOR;
        }
        clamped_sum += *z;
    }
    for z in row.iter_mut() {
        *z /= clamped_sum;
    }
}

pub fn forward(head: &SoftmaxHead, vectors: &Matrix) -> Result<ProbabilityMatrix, LossError> {
    Ok(softmax_rows(head.logits(vectors)?))
}

#[inline]
fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Mean negative log-probability of the true classes.
pub fn cross_entropy(probs: &ProbabilityMatrix, labels: &[usize]) -> Result<f64, LossError> {
    if labels.len() != probs.rows() {
        return Err(LossError::Shape(format!(
            "{} rows but {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let mut acc = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= probs.ways() {
            return Err(LossError::LabelOutOfRange {
                label: y,
                ways: probs.ways(),
            });
        }
        let p = probs.row(i)[y];
        acc -= (if p < PROB_FLOOR { PROB_FLOOR } else { p }).ln();
    }
    Ok(acc / labels.len() as f64)
}

/// `1/|Q| sum_i sum_k p_ik ln p_ik`, in `[-ln K, 0]`.
pub fn entropy_regularizer(probs: &ProbabilityMatrix) -> f64 {
    let mut acc = 0.0;
    for row in probs.0.iter_rows() {
        let mut r = 0.0;
        for &p in row {
            r += xlogx(p);
        }
        acc += r;
    }
    acc / probs.rows() as f64
}

/// Marginal entropy `H(p_hat)` plus `alpha` times [`entropy_regularizer`].
pub fn mi_regularizer(probs: &ProbabilityMatrix, alpha: f64) -> f64 {
    let marginal_entropy: f64 = -probs.marginal().into_iter().map(xlogx).sum::<f64>();
    marginal_entropy + alpha * entropy_regularizer(probs)
}

/// `sum_k sqrt(q_k p_k)`.
pub fn bhattacharyya(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in q.iter().zip(p) {
        acc += (a * b).sqrt();
    }
    acc
}

/// Geodesic distance on the probability simplex, in `[0, pi]`.
pub fn fisher_rao_distance(q: &[f64], p: &[f64]) -> Result<f64, LossError> {
    if q.len() != p.len() {
        return Err(LossError::Shape(format!("{} vs {} classes", q.len(), p.len())));
    }
    Ok(2.0 * bhattacharyya(q, p).clamp(0.0, 1.0).acos())
}

/// Square roots of the probabilities and their column sums.
fn sqrt_and_colsums(probs: &ProbabilityMatrix) -> (Matrix, Vec<f64>) {
    let mut roots = probs.0.clone();
    let mut colsum = vec![0.0; probs.ways()];
    for i in 0..roots.rows() {
        for (r, c) in roots.row_mut(i).iter_mut().zip(colsum.iter_mut()) {
            *r = r.sqrt();
            *c += *r;
        }
    }
    (roots, colsum)
}

/// `1/|Q| sum_i -ln sum_j BC(p_i, p_j)`, in `[-ln|Q|, 0]`.
///
/// Uses `sum_j BC(p_i, p_j) = sum_k sqrt(p_ik) * sum_j sqrt(p_jk)`, which is
/// linear in `|Q|`.
pub fn fr_regularizer(probs: &ProbabilityMatrix) -> f64 {
    let (roots, colsum) = sqrt_and_colsums(probs);
    let mut acc = 0.0;
    for r in roots.iter_rows() {
        acc -= dot(r, &colsum).ln();
    }
    acc / probs.rows() as f64
}

/// Value of the transductive term selected by `method`; zero for methods
/// without one.
pub fn regularizer(probs: &ProbabilityMatrix, method: Method, alpha: f64) -> f64 {
    match method {
        Method::Entropy => entropy_regularizer(probs),
        Method::MutualInfo => mi_regularizer(probs, alpha),
        Method::FisherRao => fr_regularizer(probs),
        Method::CrossEntropy | Method::Prototypical | Method::SelfTraining => 0.0,
    }
}

/// `d R_H / d z` for softmax logits `z`, per row:
/// `p_k (ln p_k - sum_l p_l ln p_l) / n`.
fn entropy_logit_grad(probs: &ProbabilityMatrix, out: &mut Matrix, scale: f64) {
    let n = probs.rows() as f64;
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let mean_log: f64 = p.iter().map(|&v| xlogx(v)).sum();
        for (k, g) in out.row_mut(i).iter_mut().enumerate() {
            *g += scale * p[k] * (p[k].ln() - mean_log) / n;
        }
    }
}

/// `d H(p_hat) / d z`, per row: `-p_k (ln p_hat_k - sum_l p_l ln p_hat_l) / n`.
fn marginal_entropy_logit_grad(probs: &ProbabilityMatrix, out: &mut Matrix, scale: f64) {
    let n = probs.rows() as f64;
    let log_marginal: Vec<f64> = probs.marginal().into_iter().map(f64::ln).collect();
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let expected = dot(p, &log_marginal);
        for (k, g) in out.row_mut(i).iter_mut().enumerate() {
            *g -= scale * p[k] * (log_marginal[k] - expected) / n;
        }
    }
}

/// `d R_FR / d z`. With `r = sqrt(p)`, column sums `c`, row scores
/// `s_i = r_i . c` and `u_k = sum_i r_ik / s_i`, the derivative with respect
/// to `r_mk` is `-(c_k / s_m + u_k) / n`; pushing it through the square root
/// and the softmax gives `-(r_mk a_mk - p_mk sum_l r_ml a_ml) / 2n` with
/// `a_mk = c_k / s_m + u_k`.
fn fisher_rao_logit_grad(probs: &ProbabilityMatrix, out: &mut Matrix, scale: f64) {
    let n = probs.rows() as f64;
    let (roots, colsum) = sqrt_and_colsums(probs);
    let scores: Vec<f64> = roots.iter_rows().map(|r| dot(r, &colsum)).collect();
    let mut u = vec![0.0; probs.ways()];
    for (r, s) in roots.iter_rows().zip(&scores) {
        for (uk, rk) in u.iter_mut().zip(r) {
            *uk += rk / s;
        }
    }
    let mut a = vec![0.0; probs.ways()];
    for m in 0..probs.rows() {
        let r = roots.row(m);
        let p = probs.row(m);
        for k in 0..a.len() {
            a[k] = colsum[k] / scores[m] + u[k];
        }
        let weighted = dot(r, &a);
        for (k, g) in out.row_mut(m).iter_mut().enumerate() {
            *g -= scale * (r[k] * a[k] - p[k] * weighted) / (2.0 * n);
        }
    }
}

/// Adds `scale * dR/dz` for the query term of `method` into `out`.
fn regularizer_logit_grad(probs: &ProbabilityMatrix, method: Method, alpha: f64, out: &mut Matrix, scale: f64) {
    match method {
        Method::Entropy => entropy_logit_grad(probs, out, scale),
        Method::MutualInfo => {
            marginal_entropy_logit_grad(probs, out, scale);
            entropy_logit_grad(probs, out, scale * alpha);
        }
        Method::FisherRao => fisher_rao_logit_grad(probs, out, scale),
        Method::CrossEntropy | Method::Prototypical | Method::SelfTraining => {}
    }
}

fn check_compatible(head: &SoftmaxHead, task: &Task, spec: &MethodSpec) -> Result<(), LossError> {
    spec.validate()?;
    if !spec.method.is_gradient_based() {
        return Err(LossError::NotAnObjective(spec.method));
    }
    if head.ways() != task.ways() || head.dim() != task.dim() {
        return Err(LossError::Shape(format!(
            "head is {}x{}, task is {}-way with dimension {}",
            head.ways(),
            head.dim(),
            task.ways(),
            task.dim()
        )));
    }
    Ok(())
}

/// Whether the query term contributes for this spec. A zero weight skips it
/// entirely so that `lambda = 0` reproduces plain cross-entropy bit for bit.
fn uses_query(spec: &MethodSpec, task: &Task) -> bool {
    spec.method != Method::CrossEntropy && spec.lambda != 0.0 && task.query().rows() > 0
}

/// Objective value and, optionally, its gradient.
pub(crate) fn evaluate(
    head: &SoftmaxHead,
    task: &Task,
    spec: &MethodSpec,
    with_gradient: bool,
) -> Result<(f64, Option<HeadGradient>), LossError> {
    check_compatible(head, task, spec)?;
    let support_probs = forward(head, task.support())?;
    let mut loss = cross_entropy(&support_probs, task.support_labels())?;

    let query_probs = if uses_query(spec, task) {
        let q = forward(head, task.query())?;
        loss -= spec.lambda * regularizer(&q, spec.method, spec.alpha);
        Some(q)
    } else {
        None
    };

    if !with_gradient {
        return Ok((loss, None));
    }

    let mut grad = HeadGradient::zeros(head.ways(), head.dim());
    let n_support = task.support().rows() as f64;
    let mut support_grad = support_probs.0;
    for (i, &y) in task.support_labels().iter().enumerate() {
        let row = support_grad.row_mut(i);
        row[y] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n_support);
    }
    grad.accumulate(&support_grad, task.support());

    if let Some(q) = query_probs {
        let mut query_grad = Matrix::zeros(q.rows(), q.ways());
        regularizer_logit_grad(&q, spec.method, spec.alpha, &mut query_grad, -spec.lambda);
        grad.accumulate(&query_grad, task.query());
    }
    Ok((loss, Some(grad)))
}

/// `CE(support) - lambda * R(query)` for CE, H, I and FR.
pub fn objective(head: &SoftmaxHead, task: &Task, spec: &MethodSpec) -> Result<f64, LossError> {
    evaluate(head, task, spec, false).map(|(loss, _)| loss)
}

/// Analytic gradient of [`objective`] with respect to the head.
pub fn gradient(head: &SoftmaxHead, task: &Task, spec: &MethodSpec) -> Result<HeadGradient, LossError> {
    evaluate(head, task, spec, true).map(|(_, g)| g.expect("gradient requested"))
}

/// Value and gradient of the query term `R` alone (no sign flip, no lambda).
pub fn regularizer_gradient(
    head: &SoftmaxHead,
    query: &Matrix,
    method: Method,
    alpha: f64,
) -> Result<(f64, HeadGradient), LossError> {
    let probs = forward(head, query)?;
    let value = regularizer(&probs, method, alpha);
    let mut logit_grad = Matrix::zeros(probs.rows(), probs.ways());
    regularizer_logit_grad(&probs, method, alpha, &mut logit_grad, 1.0);
    let mut grad = HeadGradient::zeros(head.ways(), head.dim());
    grad.accumulate(&logit_grad, query);
    Ok((value, grad))
}
