mod common;

use common::{fr_cosine_form, random_instance};
use fewshot_core::losses::{fr_regularizer, mi_regularizer, objective, Method, MethodSpec, ProbabilityMatrix};
use fewshot_core::synthetic::dirichlet_rows;
use fewshot_core::{losses, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot_rows(n: usize, k: usize) -> ProbabilityMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|c| if c == i % k { 1.0 } else { 0.0 }).collect())
        .collect();
    ProbabilityMatrix::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fisher_rao_lower_bounds_mutual_information(
        seed in any::<u64>(),
        n in 2usize..=50,
        k in 2usize..=20,
        concentration in prop::sample::select(vec![0.05, 0.3, 1.0, 5.0]),
        alpha in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = dirichlet_rows(&mut rng, n, k, concentration);
        let lower = fr_regularizer(&p) + (n as f64).ln();
        let mi = mi_regularizer(&p, 1.0);
        prop_assert!(lower <= mi + 1e-8, "{lower} > {mi}");
        prop_assert!(mi <= mi_regularizer(&p, alpha) + 1e-8);
    }

    #[test]
    fn direct_and_cosine_forms_agree(seed in any::<u64>(), n in 1usize..=30, k in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = dirichlet_rows(&mut rng, n, k, 0.5);
        prop_assert!((fr_regularizer(&p) - fr_cosine_form(&p)).abs() < 1e-9);
    }
}

#[test]
fn bound_is_tight_at_both_ends() {
    for n in [2usize, 5, 17, 50] {
        let same = ProbabilityMatrix::from_rows(&vec![vec![0.2, 0.5, 0.3]; n]).unwrap();
        assert!((fr_regularizer(&same) + (n as f64).ln()).abs() < 1e-6);

        let hot = one_hot_rows(n, n);
        let lower = fr_regularizer(&hot) + (n as f64).ln();
        assert!((lower - (n as f64).ln()).abs() < 1e-6);
        assert!((mi_regularizer(&hot, 1.0) - (n as f64).ln()).abs() < 1e-6);
    }
}

#[test]
fn fisher_rao_objective_dominates_shifted_mutual_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let (head, task) = random_instance(&mut rng);
        let lambda = rng.random_range(0.1..3.0);
        let fr = objective(&head, &task, &MethodSpec::new(Method::FisherRao).with_lambda(lambda)).unwrap();
        let ce = objective(&head, &task, &MethodSpec::new(Method::CrossEntropy)).unwrap();
        let q = losses::forward(&head, task.query()).unwrap();
        let n = task.query().rows() as f64;
        let replaced = ce - lambda * (mi_regularizer(&q, 1.0) - n.ln());
        assert!(fr >= replaced - 1e-8, "{fr} < {replaced}");
    }
}

#[test]
fn softmax_floor_keeps_values_finite() {
    let logits = Matrix::from_rows(&[vec![800.0, -800.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let p = losses::softmax_rows(logits);
    assert!(fr_regularizer(&p).is_finite());
    assert!(mi_regularizer(&p, 0.5).is_finite());
    assert!(p.row(0).iter().all(|&v| v >= 1e-13));
}
