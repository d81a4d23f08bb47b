//! Featurization of LFs and utterances.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fnv::FnvHasher;
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{Corpus, Example};
use crate::lf::{self, LfError, UnitKind};
use crate::numerics::Distribution;
use crate::sparse::SparseVector;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit a model on zero examples")]
    NoExamples,
    #[error("example {id:?}: {source}")]
    Lf {
        id: String,
        #[source]
        source: LfError,
    },
    #[error("example {id:?} has no {lang:?} utterance")]
    MissingUtterance { id: String, lang: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("no precomputed embedding for {0:?}")]
    UnknownEmbedding(String),
    #[error("embedding file {path}: {message}")]
    EmbeddingFile { path: String, message: String },
}

fn units_of(example: &Example, kind: UnitKind) -> Result<Vec<String>, FeatureError> {
    let tree = lf::parse_lf(&example.lf).map_err(|source| FeatureError::Lf {
        id: example.id.clone(),
        source,
    })?;
    Ok(lf::extract_units(&tree, kind))
}

/// TF-IDF over atoms and compounds, with each LF as one document.
#[derive(Debug, Clone)]
pub struct TfidfModel {
    vocabulary: BTreeMap<String, u32>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfidfModel {
    /// Feature ids are assigned in lexicographic order of the unit strings.
    pub fn fit(examples: &[Example]) -> Result<Self, FeatureError> {
        if examples.is_empty() {
            return Err(FeatureError::NoExamples);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for ex in examples {
            let distinct: BTreeSet<String> = units_of(ex, UnitKind::Both)?.into_iter().collect();
            for u in distinct {
                *df.entry(u).or_default() += 1;
            }
        }
        let n = examples.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (unit, d)) in df.into_iter().enumerate() {
            vocabulary.insert(unit, i as u32);
            idf.push((n / d as f64).ln());
        }
        Ok(TfidfModel {
            vocabulary,
            idf,
            doc_count: examples.len(),
        })
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, u32> {
        &self.vocabulary
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn idf(&self, unit: &str) -> Option<f64> {
        self.vocabulary.get(unit).map(|&i| self.idf[i as usize])
    }

    /// Raw term count times idf. Units unseen at fit time are dropped.
    pub fn featurize(&self, example: &Example) -> Result<SparseVector, FeatureError> {
        let units = units_of(example, UnitKind::Both)?;
        Ok(SparseVector::from_pairs(units.iter().filter_map(|u| {
            self.vocabulary
                .get(u)
                .map(|&i| (i, self.idf[i as usize]))
        })))
    }
}

/// Lowercased whitespace tokens with every non-alphanumeric character
/// removed; tokens that end up empty are dropped.
pub fn source_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|t: &String| !t.is_empty())
        .collect()
}

/// Co-occurrence counts between LF units and source tokens, giving the
/// empirical `p(token | unit)`.
#[derive(Debug, Clone)]
pub struct CooccurrenceModel {
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    row_totals: BTreeMap<String, u64>,
    source_vocab: BTreeSet<String>,
    unit: UnitKind,
}

impl CooccurrenceModel {
    /// Counts, per example, each (unit, token) pair at most once.
    pub fn fit(corpus: &Corpus, lang: &str, unit: UnitKind) -> Result<Self, FeatureError> {
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut source_vocab = BTreeSet::new();
        for ex in corpus.examples() {
            let text = ex.utterance(lang).ok_or_else(|| FeatureError::MissingUtterance {
                id: ex.id.clone(),
                lang: lang.to_string(),
            })?;
            let tokens: BTreeSet<String> = source_tokens(text).into_iter().collect();
            let units: BTreeSet<String> = units_of(ex, unit)?.into_iter().collect();
            for u in units {
                let row = counts.entry(u).or_default();
                for t in &tokens {
                    *row.entry(t.clone()).or_default() += 1;
                }
            }
            source_vocab.extend(tokens);
        }
        let row_totals = counts
            .iter()
            .map(|(u, row)| (u.clone(), row.values().sum()))
            .collect();
        Ok(CooccurrenceModel {
            counts,
            row_totals,
            source_vocab,
            unit,
        })
    }

    pub fn unit(&self) -> UnitKind {
        self.unit
    }

    pub fn source_vocab(&self) -> &BTreeSet<String> {
        &self.source_vocab
    }

    pub fn count(&self, unit: &str, token: &str) -> u64 {
        self.counts
            .get(unit)
            .and_then(|r| r.get(token))
            .copied()
            .unwrap_or(0)
    }

    pub fn row_total(&self, unit: &str) -> u64 {
        self.row_totals.get(unit).copied().unwrap_or(0)
    }

    pub fn probability(&self, token: &str, unit: &str) -> f64 {
        match self.row_total(unit) {
            0 => 0.0,
            total => self.count(unit, token) as f64 / total as f64,
        }
    }

    /// `p(· | unit)` over the tokens seen with it, or `None` for a unit with
    /// no counts.
    pub fn conditional(&self, unit: &str) -> Option<Distribution> {
        let row = self.counts.get(unit)?;
        let counts: Vec<f64> = row.values().map(|&c| c as f64).collect();
        Distribution::from_counts(&counts).ok()
    }

    /// Entropy of `p(· | unit)`; zero for units with no counts.
    pub fn entropy(&self, unit: &str) -> f64 {
        self.conditional(unit).map(|d| d.entropy()).unwrap_or(0.0)
    }

    pub fn units(&self) -> impl Iterator<Item = &str> + '_ {
        self.counts.keys().map(String::as_str)
    }
}

pub const NGRAM: usize = 3;
pub const HASH_BUCKETS: u32 = 1 << 16;
pub const PAD: char = '#';

/// FNV-1a (64-bit) of the UTF-8 bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Character trigrams of the lowercased, whitespace-collapsed text padded
/// with one `#` on each side. `"abc"` yields `#ab`, `abc`, `bc#`.
pub fn char_ngrams(text: &str) -> Vec<String> {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let chars: Vec<char> = std::iter::once(PAD)
        .chain(collapsed.chars())
        .chain(std::iter::once(PAD))
        .collect();
    chars.windows(NGRAM).map(|w| w.iter().collect()).collect()
}

/// Hashed trigram frequencies, L2-normalized. Bucket = FNV-1a mod 2^16.
pub fn embed_utterance(text: &str) -> Result<SparseVector, FeatureError> {
    if text.trim().is_empty() {
        return Err(FeatureError::EmptyText);
    }
    let v = SparseVector::from_pairs(
        char_ngrams(text)
            .iter()
            .map(|g| ((fnv1a(g.as_bytes()) % HASH_BUCKETS as u64) as u32, 1.0)),
    );
    Ok(v.normalized())
}

pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Source of utterance vectors for density and clustering.
pub trait UtteranceEmbedder: Send + Sync {
    fn embed(&self, id: &str, text: &str) -> Result<SparseVector, FeatureError>;
}

/// The default hashed-trigram embedder.
#[derive(Debug, Clone, Copy, Default)]
pub struct NgramEmbedder;

impl UtteranceEmbedder for NgramEmbedder {
    fn embed(&self, _id: &str, text: &str) -> Result<SparseVector, FeatureError> {
        embed_utterance(text)
    }
}

/// Vectors read from a JSON Lines file of `{"id": ..., "vector": [...]}`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbedder {
    vectors: HashMap<String, SparseVector>,
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

impl PrecomputedEmbedder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let path = path.as_ref();
        let err = |message: String| FeatureError::EmbeddingFile {
            path: path.display().to_string(),
            message,
        };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            vectors.insert(rec.id, SparseVector::from_dense(&rec.vector));
        }
        Ok(PrecomputedEmbedder { vectors })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) {
        self.vectors.insert(id.into(), SparseVector::from_dense(vector));
    }
}

impl UtteranceEmbedder for PrecomputedEmbedder {
    fn embed(&self, id: &str, _text: &str) -> Result<SparseVector, FeatureError> {
        self.vectors
            .get(id)
            .cloned()
            .ok_or_else(|| FeatureError::UnknownEmbedding(id.to_string()))
    }
}
