//! Seeded N-shot K-way episode generation.
//!
//! Every episode is a pure function of `(corpus, ways, shots, queries, seed,
//! episode_index)`. The per-episode generator is seeded with
//! [`episode_seed`], so episode `i` can be regenerated on its own and
//! episodes can be produced by any number of workers in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::store::LabeledCorpus;

/// Conventional query count per class when none is given.
pub const DEFAULT_QUERIES: usize = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error("only {eligible} classes have at least {needed} records (shots + queries), {ways} required")]
    TooFewClasses {
        eligible: usize,
        ways: usize,
        needed: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub seed: u64,
    pub episode_index: u64,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.ways < 2 {
            return Err(SamplerError::InvalidSpec(format!(
                "ways must be >= 2, got {}",
                self.ways
            )));
        }
        if self.shots < 1 {
            return Err(SamplerError::InvalidSpec("shots must be >= 1".into()));
        }
        if self.queries < 1 {
            return Err(SamplerError::InvalidSpec("queries must be >= 1".into()));
        }
        Ok(())
    }

    fn per_class(&self) -> usize {
        self.shots + self.queries
    }
}

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed of episode `episode_index`: the `(episode_index + 1)`-th output of a
/// SplitMix64 generator started at `seed`.
pub fn episode_seed(seed: u64, episode_index: u64) -> u64 {
    mix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(episode_index.wrapping_add(1))))
}

/// Query labels of an episode. Training code receives a [`Task`], which has
/// no access to these; only scoring code in this crate can read them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// What a head-fitting procedure is allowed to see: labeled support vectors
/// and unlabeled query vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    ways: usize,
    support: Matrix,
    support_labels: Vec<usize>,
    query: Matrix,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid task: {0}")]
pub struct TaskError(String);

impl Task {
    pub fn new(ways: usize, support: Matrix, support_labels: Vec<usize>, query: Matrix) -> Result<Self, TaskError> {
        if ways < 2 {
            return Err(TaskError(format!("ways must be >= 2, got {ways}")));
        }
        if support.rows() == 0 || support.cols() == 0 {
            return Err(TaskError("support set is empty".into()));
        }
        if support.rows() != support_labels.len() {
            return Err(TaskError(format!(
                "{} support vectors but {} labels",
                support.rows(),
                support_labels.len()
            )));
        }
        if query.rows() > 0 && query.cols() != support.cols() {
            return Err(TaskError(format!(
                "support dimension {} differs from query dimension {}",
                support.cols(),
                query.cols()
            )));
        }
        if let Some(&bad) = support_labels.iter().find(|&&l| l >= ways) {
            return Err(TaskError(format!("support label {bad} out of range for {ways} ways")));
        }
        let mut present = vec![false; ways];
        for &l in &support_labels {
            present[l] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(TaskError(format!("class {missing} has no support example")));
        }
        Ok(Self {
            ways,
            support,
            support_labels,
            query,
        })
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn dim(&self) -> usize {
        self.support.cols()
    }

    pub fn support(&self) -> &Matrix {
        &self.support
    }

    pub fn support_labels(&self) -> &[usize] {
        &self.support_labels
    }

    pub fn query(&self) -> &Matrix {
        &self.query
    }
}

/// One sampled task together with its provenance and held-out answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    index: u64,
    class_map: Vec<String>,
    support_positions: Vec<usize>,
    query_positions: Vec<usize>,
    task: Task,
    query_labels: HiddenLabels,
}

/// Audit form of an episode: corpus positions only, class names optional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeIndexLists<'a> {
    pub i: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<&'a [String]>,
    pub support: &'a [usize],
    pub query: &'a [usize],
}

impl Episode {
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Original class names by local label.
    pub fn class_map(&self) -> &[String] {
        &self.class_map
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn query_labels_hidden(&self) -> &HiddenLabels {
        &self.query_labels
    }

    /// Corpus positions of the support records, aligned with the task rows.
    pub fn support_positions(&self) -> &[usize] {
        &self.support_positions
    }

    pub fn query_positions(&self) -> &[usize] {
        &self.query_positions
    }

    pub fn index_lists(&self, with_class_names: bool) -> EpisodeIndexLists<'_> {
        EpisodeIndexLists {
            i: self.index,
            classes: with_class_names.then_some(self.class_map.as_slice()),
            support: &self.support_positions,
            query: &self.query_positions,
        }
    }
}

/// Moves `take` uniformly chosen elements (without replacement) to the front
/// of `items`, in draw order.
fn partial_shuffle<T, R: Rng>(items: &mut [T], take: usize, rng: &mut R) {
    let n = items.len();
    for i in 0..take.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

fn eligible_classes(corpus: &LabeledCorpus, needed: usize) -> Vec<&str> {
    corpus
        .label_space()
        .iter()
        .filter(|label| corpus.class_positions(label).map_or(0, <[usize]>::len) >= needed)
        .map(String::as_str)
        .collect()
}

fn check_feasible<'a>(corpus: &'a LabeledCorpus, spec: &EpisodeSpec) -> Result<Vec<&'a str>, SamplerError> {
    spec.validate()?;
    let eligible = eligible_classes(corpus, spec.per_class());
    if eligible.len() < spec.ways {
        return Err(SamplerError::TooFewClasses {
            eligible: eligible.len(),
            ways: spec.ways,
            needed: spec.per_class(),
        });
    }
    Ok(eligible)
}

pub fn sample_episode(corpus: &LabeledCorpus, spec: &EpisodeSpec) -> Result<Episode, SamplerError> {
    let eligible = check_feasible(corpus, spec)?;
    Ok(draw(corpus, spec, eligible))
}

fn draw(corpus: &LabeledCorpus, spec: &EpisodeSpec, mut eligible: Vec<&str>) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(spec.seed, spec.episode_index));
    partial_shuffle(&mut eligible, spec.ways, &mut rng);
    let classes = &eligible[..spec.ways];

    let dim = corpus.dim();
    let mut support = Vec::with_capacity(spec.ways * spec.shots * dim);
    let mut query = Vec::with_capacity(spec.ways * spec.queries * dim);
    let mut support_labels = Vec::with_capacity(spec.ways * spec.shots);
    let mut query_labels = Vec::with_capacity(spec.ways * spec.queries);
    let mut support_positions = Vec::with_capacity(spec.ways * spec.shots);
    let mut query_positions = Vec::with_capacity(spec.ways * spec.queries);

    for (local, class) in classes.iter().enumerate() {
        let mut positions = corpus
            .class_positions(class)
            .expect("eligible class is indexed")
            .to_vec();
        partial_shuffle(&mut positions, spec.per_class(), &mut rng);
        for (slot, &p) in positions[..spec.per_class()].iter().enumerate() {
            let vector = &corpus.record(p).vector;
            if slot < spec.shots {
                support.extend_from_slice(vector);
                support_labels.push(local);
                support_positions.push(p);
            } else {
                query.extend_from_slice(vector);
                query_labels.push(local);
                query_positions.push(p);
            }
        }
    }

    let support = Matrix::from_vec(support_labels.len(), dim, support).expect("support shape");
    let query = Matrix::from_vec(query_labels.len(), dim, query).expect("query shape");
    let task = Task::new(spec.ways, support, support_labels, query).expect("sampled task is well formed");
    Episode {
        index: spec.episode_index,
        class_map: classes.iter().map(|c| c.to_string()).collect(),
        support_positions,
        query_positions,
        task,
        query_labels: HiddenLabels(query_labels),
    }
}

/// A random-access sequence of `len` episodes sharing one seed.
#[derive(Debug, Clone)]
pub struct EpisodeStream<'a> {
    corpus: &'a LabeledCorpus,
    eligible: Vec<&'a str>,
    ways: usize,
    shots: usize,
    queries: usize,
    seed: u64,
    len: u64,
}

pub fn episode_stream(
    corpus: &LabeledCorpus,
    ways: usize,
    shots: usize,
    queries: usize,
    episodes: u64,
    seed: u64,
) -> Result<EpisodeStream<'_>, SamplerError> {
    if episodes == 0 {
        return Err(SamplerError::InvalidSpec("episode count must be >= 1".into()));
    }
    let probe = EpisodeSpec {
        ways,
        shots,
        queries,
        seed,
        episode_index: 0,
    };
    let eligible = check_feasible(corpus, &probe)?;
    Ok(EpisodeStream {
        corpus,
        eligible,
        ways,
        shots,
        queries,
        seed,
        len: episodes,
    })
}

impl<'a> EpisodeStream<'a> {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spec(&self, episode_index: u64) -> EpisodeSpec {
        EpisodeSpec {
            ways: self.ways,
            shots: self.shots,
            queries: self.queries,
            seed: self.seed,
            episode_index,
        }
    }

    /// Episode `episode_index`, independent of every other episode.
    pub fn episode(&self, episode_index: u64) -> Episode {
        draw(self.corpus, &self.spec(episode_index), self.eligible.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = Episode> + '_ {
        (0..self.len).map(move |i| self.episode(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::EmbeddingRecord;
    use std::collections::HashSet;

    fn grid_corpus(classes: usize, per_class: usize) -> LabeledCorpus {
        let mut records = Vec::new();
        for c in 0..classes {
            for r in 0..per_class {
                records.push(EmbeddingRecord::new(
                    format!("c{c:02}-r{r:03}"),
                    format!("class-{c:02}"),
                    vec![c as f64, r as f64, 1.0],
                ));
            }
        }
        LabeledCorpus::from_records(records).unwrap()
    }

    fn spec(ways: usize, shots: usize, queries: usize, seed: u64, index: u64) -> EpisodeSpec {
        EpisodeSpec {
            ways,
            shots,
            queries,
            seed,
            episode_index: index,
        }
    }

    #[test]
    fn sizes_balance_and_disjointness() {
        let corpus = grid_corpus(20, 100);
        let ep = sample_episode(&corpus, &spec(5, 5, 15, 7, 0)).unwrap();
        assert_eq!(ep.task().support().rows(), 25);
        assert_eq!(ep.task().query().rows(), 75);
        let mut s_counts = [0; 5];
        let mut q_counts = [0; 5];
        for &l in ep.task().support_labels() {
            s_counts[l] += 1;
        }
        for &l in ep.query_labels_hidden().as_slice() {
            q_counts[l] += 1;
        }
        assert_eq!(s_counts, [5; 5]);
        assert_eq!(q_counts, [15; 5]);
        let s: HashSet<_> = ep.support_positions().iter().collect();
        assert!(ep.query_positions().iter().all(|p| !s.contains(p)));
        let names: HashSet<_> = ep.class_map().iter().collect();
        assert_eq!(names.len(), 5);
        // rows line up with the corpus records and the local class map
        for (row, (&p, &l)) in ep
            .support_positions()
            .iter()
            .zip(ep.task().support_labels())
            .enumerate()
        {
            assert_eq!(ep.task().support().row(row), corpus.record(p).vector.as_slice());
            assert_eq!(corpus.record(p).label, ep.class_map()[l]);
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let corpus = grid_corpus(12, 30);
        let a = sample_episode(&corpus, &spec(5, 5, 15, 99, 3)).unwrap();
        let b = sample_episode(&corpus, &spec(5, 5, 15, 99, 3)).unwrap();
        assert_eq!(a, b);
        let bits = |e: &Episode| -> Vec<u64> {
            e.task()
                .support()
                .as_slice()
                .iter()
                .chain(e.task().query().as_slice())
                .map(|x| x.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn every_class_appears_over_many_episodes() {
        let corpus = grid_corpus(20, 25);
        let stream = episode_stream(&corpus, 5, 5, 15, 1000, 1).unwrap();
        let mut seen = HashSet::new();
        for ep in stream.iter() {
            seen.extend(ep.class_map().iter().cloned());
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn stream_is_random_access() {
        let corpus = grid_corpus(10, 30);
        let stream = episode_stream(&corpus, 5, 2, 3, 1000, 5).unwrap();
        assert_eq!(stream.iter().count(), 1000);
        let from_stream = stream.iter().nth(747).unwrap();
        let alone = sample_episode(&corpus, &spec(5, 2, 3, 5, 747)).unwrap();
        assert_eq!(from_stream, alone);
    }

    #[test]
    fn different_seeds_differ() {
        let corpus = grid_corpus(20, 30);
        let a = sample_episode(&corpus, &spec(5, 5, 15, 1, 0)).unwrap();
        let b = sample_episode(&corpus, &spec(5, 5, 15, 2, 0)).unwrap();
        assert!(a.class_map() != b.class_map() || a.support_positions() != b.support_positions());
    }

    #[test]
    fn small_classes_are_ineligible() {
        let mut records = Vec::new();
        for c in 0..6 {
            let n = if c < 3 { 30 } else { 4 };
            for r in 0..n {
                records.push(EmbeddingRecord::new(format!("{c}-{r}"), format!("c{c}"), vec![1.0]));
            }
        }
        let corpus = LabeledCorpus::from_records(records).unwrap();
        let err = sample_episode(&corpus, &spec(5, 5, 15, 0, 0)).unwrap_err();
        assert_eq!(
            err,
            SamplerError::TooFewClasses {
                eligible: 3,
                ways: 5,
                needed: 20
            }
        );
        for i in 0..50 {
            let ep = sample_episode(&corpus, &spec(3, 5, 15, 0, i)).unwrap();
            assert!(ep.class_map().iter().all(|c| ["c0", "c1", "c2"].contains(&c.as_str())));
        }
    }

    #[test]
    fn invalid_specs() {
        let corpus = grid_corpus(4, 10);
        assert!(matches!(
            sample_episode(&corpus, &spec(1, 1, 1, 0, 0)),
            Err(SamplerError::InvalidSpec(_))
        ));
        assert!(matches!(
            sample_episode(&corpus, &spec(2, 0, 1, 0, 0)),
            Err(SamplerError::InvalidSpec(_))
        ));
        assert!(matches!(
            sample_episode(&corpus, &spec(2, 1, 0, 0, 0)),
            Err(SamplerError::InvalidSpec(_))
        ));
        assert!(episode_stream(&corpus, 2, 1, 1, 0, 0).is_err());
    }

    #[test]
    fn episode_seeds_are_distinct() {
        let seeds: HashSet<_> = (0..10_000).map(|i| episode_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(episode_seed(0, 1), episode_seed(1, 0));
    }
}
