//! Synthetic corpora and soft-prediction matrices for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::losses::ProbabilityMatrix;
use crate::matrix::Matrix;
use crate::store::{EmbeddingRecord, LabeledCorpus};

/// Isotropic Gaussian classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub classes: usize,
    pub per_class: usize,
    /// Root-mean-square distance between two class means, in units of the
    /// within-class standard deviation.
    pub separation: f64,
    /// Within-class standard deviation per coordinate.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            classes: 20,
            per_class: 100,
            separation: 3.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

/// Class means are drawn from `N(0, s^2 I)` with `s = separation * sigma /
/// sqrt(2 dim)`, which makes the expected squared distance between two means
/// `(separation * sigma)^2`. Records are named `c{class}-{n}` with labels
/// `class-{class}`.
pub fn gaussian_mixture(spec: &MixtureSpec) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spread = spec.separation * spec.sigma / (2.0 * spec.dim as f64).sqrt();
    let mut records = Vec::with_capacity(spec.classes * spec.per_class);
    for c in 0..spec.classes {
        let mean: Vec<f64> = (0..spec.dim).map(|_| spread * normal(&mut rng)).collect();
        for n in 0..spec.per_class {
            let v = mean.iter().map(|m| m + spec.sigma * normal(&mut rng)).collect();
            records.push(EmbeddingRecord::new(
                format!("c{c:03}-{n:05}"),
                format!("class-{c:03}"),
                v,
            ));
        }
    }
    LabeledCorpus::from_records(records).expect("synthetic records are valid")
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `rows x cols` matrix of independent `N(0, scale^2)` entries.
pub fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * normal(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// One draw from a symmetric Dirichlet distribution.
pub fn dirichlet<R: Rng>(rng: &mut R, k: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// `n` Dirichlet rows over `k` classes.
pub fn dirichlet_rows<R: Rng>(rng: &mut R, n: usize, k: usize, concentration: f64) -> ProbabilityMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| dirichlet(rng, k, concentration)).collect();
    ProbabilityMatrix::from_rows(&rows).expect("Dirichlet rows are stochastic")
}
