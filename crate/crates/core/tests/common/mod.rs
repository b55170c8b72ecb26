#![allow(dead_code)]

use fewshot_core::losses::{self, fisher_rao_distance, MethodSpec, ProbabilityMatrix, SoftmaxHead};
use fewshot_core::synthetic::{normal, normal_matrix};
use fewshot_core::{HiddenLabels, Matrix, Task};
use rand::Rng;

/// Random head and task with `ways` in 2..=6, small dimension, and balanced
/// support labels.
pub fn random_instance<R: Rng>(rng: &mut R) -> (SoftmaxHead, Task) {
    let ways = rng.random_range(2..=6);
    let dim = rng.random_range(3..=8);
    let shots = rng.random_range(1..=4);
    let queries = rng.random_range(3..=12);
    let support = normal_matrix(rng, ways * shots, dim, 1.0);
    let labels = (0..ways * shots).map(|i| i % ways).collect();
    let query = normal_matrix(rng, queries, dim, 1.0);
    let task = Task::new(ways, support, labels, query).unwrap();
    let head = SoftmaxHead::new(
        normal_matrix(rng, ways, dim, 0.7),
        (0..ways).map(|_| 0.5 * normal(rng)).collect(),
    )
    .unwrap();
    (head, task)
}

fn perturbed(head: &SoftmaxHead, coord: usize, delta: f64) -> SoftmaxHead {
    let mut w = head.weights().clone();
    let mut b = head.bias().to_vec();
    let n_w = w.as_slice().len();
    if coord < n_w {
        w.as_mut_slice()[coord] += delta;
    } else {
        b[coord - n_w] += delta;
    }
    SoftmaxHead::new(w, b).unwrap()
}

/// Central difference of the objective along one flattened coordinate
/// (weights first, then biases).
pub fn central_difference(head: &SoftmaxHead, task: &Task, spec: &MethodSpec, coord: usize, step: f64) -> f64 {
    let plus = losses::objective(&perturbed(head, coord, step), task, spec).unwrap();
    let minus = losses::objective(&perturbed(head, coord, -step), task, spec).unwrap();
    (plus - minus) / (2.0 * step)
}

/// Relative error with a floor that keeps near-zero components from
/// dominating.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error over `coords` random coordinates.
pub fn max_gradient_error<R: Rng>(
    rng: &mut R,
    head: &SoftmaxHead,
    task: &Task,
    spec: &MethodSpec,
    coords: usize,
) -> f64 {
    let grad = losses::gradient(head, task, spec).unwrap();
    let flat: Vec<f64> = grad.weights.as_slice().iter().chain(&grad.bias).copied().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let c = rng.random_range(0..flat.len());
        let numeric = central_difference(head, task, spec, c, 1e-4);
        worst = worst.max(relative_error(flat[c], numeric));
    }
    worst
}

/// `1/|Q| sum_i -ln sum_j cos(d_FR(p_i, p_j) / 2)`, through pairwise
/// distances rather than Bhattacharyya column sums.
pub fn fr_cosine_form(p: &ProbabilityMatrix) -> f64 {
    let n = p.rows();
    let mut total = 0.0;
    for i in 0..n {
        let mut inner = 0.0;
        for j in 0..n {
            inner += (fisher_rao_distance(p.row(i), p.row(j)).unwrap() / 2.0).cos();
        }
        total -= inner.ln();
    }
    total / n as f64
}

/// Two classes in `dim` dimensions with means `gap` within-class standard
/// deviations apart along the first axis.
pub fn two_gaussians<R: Rng>(
    rng: &mut R,
    dim: usize,
    shots: usize,
    queries: usize,
    gap: f64,
) -> (Task, HiddenLabels, Vec<usize>) {
    let sigma = 0.1;
    let mut draw = |class: usize| -> Vec<f64> {
        (0..dim)
            .map(|j| {
                let centre = if j == 0 {
                    (class as f64 - 0.5) * gap * sigma
                } else {
                    0.0
                };
                centre + sigma * normal(rng)
            })
            .collect()
    };
    let mut support = Vec::new();
    let mut support_labels = Vec::new();
    for i in 0..2 * shots {
        support.push(draw(i % 2));
        support_labels.push(i % 2);
    }
    let mut query = Vec::new();
    let mut truth = Vec::new();
    for i in 0..2 * queries {
        query.push(draw(i % 2));
        truth.push(i % 2);
    }
    let task = Task::new(
        2,
        Matrix::from_rows(&support).unwrap(),
        support_labels,
        Matrix::from_rows(&query).unwrap(),
    )
    .unwrap();
    (task, HiddenLabels::new(truth.clone()), truth)
}
