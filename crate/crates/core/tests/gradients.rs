mod common;

use common::{max_gradient_error, random_instance};
use fewshot_core::losses::{self, objective, regularizer_gradient, Method, MethodSpec, SoftmaxHead};
use fewshot_core::synthetic::normal_matrix;
use fewshot_core::{Matrix, Task};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Method::CrossEntropy),
        MethodSpec::new(Method::Entropy),
        MethodSpec::new(Method::MutualInfo).with_alpha(0.5),
        MethodSpec::new(Method::MutualInfo),
        MethodSpec::new(Method::FisherRao),
        MethodSpec::new(Method::FisherRao).with_lambda(2.5),
    ]
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for spec in specs() {
        for _ in 0..20 {
            let (head, task) = random_instance(&mut rng);
            let err = max_gradient_error(&mut rng, &head, &task, &spec, 20);
            assert!(err < 1e-5, "{:?}: relative error {err:e}", spec);
        }
    }
}

#[test]
fn zero_head_balanced_support_has_zero_bias_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ways = 4;
    let support = normal_matrix(&mut rng, 12, 3, 1.0);
    let labels = (0..12).map(|i| i % ways).collect();
    let task = Task::new(ways, support, labels, Matrix::zeros(0, 3)).unwrap();
    let grad = losses::gradient(
        &SoftmaxHead::zeros(ways, 3),
        &task,
        &MethodSpec::new(Method::CrossEntropy),
    )
    .unwrap();
    assert!(grad.bias.iter().all(|g| g.abs() < 1e-15), "{:?}", grad.bias);
}

fn identical_query_task(rows: usize) -> (SoftmaxHead, Task) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let support = normal_matrix(&mut rng, 6, 4, 1.0);
    let row = vec![0.3, -1.2, 0.8, 0.1];
    let query = Matrix::from_rows(&vec![row; rows]).unwrap();
    let task = Task::new(3, support, vec![0, 1, 2, 0, 1, 2], query).unwrap();
    let head = SoftmaxHead::new(normal_matrix(&mut rng, 3, 4, 1.0), vec![0.1, -0.2, 0.3]).unwrap();
    (head, task)
}

#[test]
fn fisher_rao_gradient_is_finite_with_identical_rows() {
    let (head, task) = identical_query_task(10);
    let grad = losses::gradient(&head, &task, &MethodSpec::new(Method::FisherRao)).unwrap();
    assert!(grad.is_finite());
}

#[test]
fn fisher_rao_term_is_flat_when_query_rows_coincide() {
    // every row identical: R_FR = -ln|Q| along any direction keeping them so
    let (head, task) = identical_query_task(7);
    let (value, grad) = regularizer_gradient(&head, task.query(), Method::FisherRao, 1.0).unwrap();
    assert!((value + 7f64.ln()).abs() < 1e-12);
    assert!(grad.norm() < 1e-9, "norm {:e}", grad.norm());
}

#[test]
fn objective_reduces_to_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let (head, task) = random_instance(&mut rng);
        let ce = objective(&head, &task, &MethodSpec::new(Method::CrossEntropy)).unwrap();
        for m in [Method::Entropy, Method::MutualInfo, Method::FisherRao] {
            let spec = MethodSpec::new(m).with_lambda(0.0);
            assert_eq!(objective(&head, &task, &spec).unwrap(), ce);
            assert_eq!(
                losses::gradient(&head, &task, &spec).unwrap(),
                losses::gradient(&head, &task, &MethodSpec::new(Method::CrossEntropy)).unwrap()
            );
        }
    }
}

#[test]
fn entropy_objective_with_uniform_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let support = normal_matrix(&mut rng, 10, 3, 1.0);
    let labels = (0..10).map(|i| i % 5).collect();
    let query = normal_matrix(&mut rng, 6, 3, 1.0);
    let task = Task::new(5, support, labels, query).unwrap();
    // zero weights and bias give uniform rows everywhere
    let head = SoftmaxHead::zeros(5, 3);
    let ce = objective(&head, &task, &MethodSpec::new(Method::CrossEntropy)).unwrap();
    let h = objective(&head, &task, &MethodSpec::new(Method::Entropy)).unwrap();
    assert!((h - (ce + 5f64.ln())).abs() < 1e-12);
}

#[test]
fn objective_rejects_non_gradient_methods_and_bad_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (head, task) = random_instance(&mut rng);
    assert!(objective(&head, &task, &MethodSpec::new(Method::Prototypical)).is_err());
    assert!(objective(&head, &task, &MethodSpec::new(Method::SelfTraining)).is_err());
    let wrong = SoftmaxHead::zeros(head.ways() + 1, head.dim());
    assert!(objective(&wrong, &task, &MethodSpec::new(Method::CrossEntropy)).is_err());
}
