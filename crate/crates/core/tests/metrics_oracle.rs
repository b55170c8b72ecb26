use fewshot_core::metrics::{accuracy, macro_f1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full confusion matrix, then per-class precision and recall.
fn brute_force_macro_f1(predicted: &[usize], truth: &[usize], ways: usize) -> f64 {
    let mut confusion = vec![vec![0usize; ways]; ways];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let mut total = 0.0;
    for k in 0..ways {
        let tp = confusion[k][k];
        let col: usize = (0..ways).map(|t| confusion[t][k]).sum();
        let row: usize = confusion[k].iter().sum();
        let precision = if col == 0 { 0.0 } else { tp as f64 / col as f64 };
        let recall = if row == 0 { 0.0 } else { tp as f64 / row as f64 };
        total += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    total / ways as f64
}

#[test]
fn macro_f1_matches_confusion_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let ways = rng.random_range(2..=10);
        let n = rng.random_range(1..=150);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..ways)).collect();
        let predicted: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.random_bool(0.6) {
                    t
                } else {
                    rng.random_range(0..ways)
                }
            })
            .collect();
        assert_eq!(
            macro_f1(&predicted, &truth, ways).unwrap(),
            brute_force_macro_f1(&predicted, &truth, ways)
        );
    }
}

#[test]
fn perfect_predictions_give_unit_scores() {
    let truth: Vec<usize> = (0..75).map(|i| i % 5).collect();
    assert_eq!(macro_f1(&truth, &truth, 5).unwrap(), 1.0);
    assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
    let mut off = truth.clone();
    off[3] = (off[3] + 1) % 5;
    assert!(macro_f1(&off, &truth, 5).unwrap() < 1.0);
    assert!(accuracy(&off, &truth).unwrap() < 1.0);
}
