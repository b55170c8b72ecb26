//! Labeled embedding corpora.
//!
//! A corpus is a validated, immutable list of [`EmbeddingRecord`]s with a
//! lexicographically ordered label space and a per-class index. The on-disk
//! form is JSONL, one record per line:
//!
//! ```text
//! {"id": "q-17", "label": "card_arrival", "embedding": [0.013, -0.2, ...]}
//! ```
//!
//! An optional `"text"` key is carried through untouched.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record {id:?} has a non-finite coordinate")]
    NonFinite { line: usize, id: String },
    #[error("line {line}: record {id:?} has an empty embedding")]
    EmptyEmbedding { line: usize, id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("record {id:?} has zero norm and cannot be normalized")]
    ZeroNorm { id: String },
}

/// One embedded example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: String,
    #[serde(rename = "embedding")]
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, label: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            vector,
            text: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

/// A validated set of records sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    records: Vec<EmbeddingRecord>,
    label_space: Vec<String>,
    index: BTreeMap<String, Vec<usize>>,
    dim: usize,
}

impl LabeledCorpus {
    /// Validates `records`; error line numbers are 1-based positions.
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, StoreError> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r));
        Self::build(numbered)
    }

    fn build(numbered: impl IntoIterator<Item = (usize, EmbeddingRecord)>) -> Result<Self, StoreError> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        let mut index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut dim = None;

        for (line, record) in numbered {
            if record.vector.is_empty() {
                return Err(StoreError::EmptyEmbedding { line, id: record.id });
            }
            let expected = *dim.get_or_insert(record.vector.len());
            if record.vector.len() != expected {
                return Err(StoreError::DimensionMismatch {
                    line,
                    expected,
                    found: record.vector.len(),
                });
            }
            if record.vector.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite { line, id: record.id });
            }
            if !seen.insert(record.id.clone()) {
                return Err(StoreError::DuplicateId { line, id: record.id });
            }
            index.entry(record.label.clone()).or_default().push(records.len());
            records.push(record);
        }

        let dim = dim.ok_or(StoreError::Empty)?;
        let label_space = index.keys().cloned().collect();
        Ok(Self {
            records,
            label_space,
            index,
            dim,
        })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn record(&self, position: usize) -> &EmbeddingRecord {
        &self.records[position]
    }

    /// Distinct class names in lexicographic order.
    pub fn label_space(&self) -> &[String] {
        &self.label_space
    }

    /// Record positions of one class, in file order.
    pub fn class_positions(&self, label: &str) -> Option<&[usize]> {
        self.index.get(label).map(Vec::as_slice)
    }

    pub fn index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the corpus as JSONL. Floats use the shortest representation
    /// that parses back to the same bits.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> io::Result<()> {
        write_records(&self.records, writer)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = File::create(path)?;
        self.write_jsonl(BufWriter::new(file))
    }
}

pub fn write_records<W: Write>(records: &[EmbeddingRecord], writer: W) -> io::Result<()> {
    let mut writer = writer;
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<LabeledCorpus, StoreError> {
    match format {
        CorpusFormat::Jsonl => {
            let file = File::open(path)?;
            read_jsonl(BufReader::new(file))
        }
    }
}

/// Parses JSONL from any reader. Blank lines are skipped but still count
/// towards reported line numbers.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<LabeledCorpus, StoreError> {
    let mut numbered = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        numbered.push((line_no, record));
    }
    LabeledCorpus::build(numbered)
}

/// Scales every vector to unit Euclidean norm.
pub fn l2_normalize(corpus: LabeledCorpus) -> Result<LabeledCorpus, StoreError> {
    let LabeledCorpus {
        mut records,
        label_space,
        index,
        dim,
    } = corpus;
    for record in &mut records {
        let norm = euclidean_norm(&record.vector);
        if norm == 0.0 {
            return Err(StoreError::ZeroNorm { id: record.id.clone() });
        }
        for v in &mut record.vector {
            *v /= norm;
        }
    }
    Ok(LabeledCorpus {
        records,
        label_space,
        index,
        dim,
    })
}

/// Euclidean norm, rescaled by the largest magnitude so that tiny or huge
/// coordinates neither underflow nor overflow when squared.
pub fn euclidean_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let mut acc = 0.0;
    for x in v {
        let y = x / scale;
        acc += y * y;
    }
    scale * acc.sqrt()
}
