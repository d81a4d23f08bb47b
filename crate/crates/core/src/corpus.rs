//! Multilingual utterance/LF corpora.
//!
//! On disk a corpus is UTF-8 JSON Lines, one record per line:
//!
//! ```text
//! {"id":"geo-17","lf":"( answer ( state:t texas ) )","utterances":{"en":"...","de":"..."}}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lf::{self, LfError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: example {id:?} has an invalid LF: {source}")]
    Lf {
        line: usize,
        id: String,
        #[source]
        source: LfError,
    },
    #[error("example {id:?} has no {lang:?} utterance")]
    MissingUtterance { id: String, lang: String },
    #[error("corpus is empty")]
    Empty,
    #[error("dev fraction {0} must lie in [0, 1)")]
    DevFraction(f64),
    #[error("dev fraction {fraction} leaves no training examples out of {total}")]
    EmptyTrain { fraction: f64, total: usize },
}

/// An LF paired with its utterances, keyed by language code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub lf: String,
    pub utterances: BTreeMap<String, String>,
}

impl Example {
    pub fn new(id: impl Into<String>, lf: impl Into<String>) -> Self {
        Example {
            id: id.into(),
            lf: lf.into(),
            utterances: BTreeMap::new(),
        }
    }

    pub fn with_utterance(mut self, lang: impl Into<String>, text: impl Into<String>) -> Self {
        self.utterances.insert(lang.into(), text.into());
        self
    }

    pub fn utterance(&self, lang: &str) -> Option<&str> {
        self.utterances.get(lang).map(String::as_str)
    }
}

/// An ordered, id-unique collection of examples for one language pair.
///
/// Reads of target-language utterances through [`Corpus::target_utterance`]
/// are counted, so callers can check that a procedure never looked at
/// translations.
#[derive(Debug, Clone)]
pub struct Corpus {
    examples: Vec<Example>,
    source_lang: String,
    target_lang: String,
    target_reads: Arc<AtomicUsize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples
            && self.source_lang == other.source_lang
            && self.target_lang == other.target_lang
    }
}

impl Corpus {
    /// Validates ids, LFs and source utterances.
    pub fn new(
        examples: Vec<Example>,
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let source_lang = source_lang.into();
        let mut seen = HashSet::new();
        for (i, ex) in examples.iter().enumerate() {
            let line = i + 1;
            if !seen.insert(ex.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line,
                    id: ex.id.clone(),
                });
            }
            lf::parse_lf(&ex.lf).map_err(|source| CorpusError::Lf {
                line,
                id: ex.id.clone(),
                source,
            })?;
            if ex.utterance(&source_lang).is_none() {
                return Err(CorpusError::MissingUtterance {
                    id: ex.id.clone(),
                    lang: source_lang,
                });
            }
        }
        Ok(Corpus {
            examples,
            source_lang,
            target_lang: target_lang.into(),
            target_reads: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn source_lang(&self) -> &str {
        &self.source_lang
    }

    pub fn target_lang(&self) -> &str {
        &self.target_lang
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn index(&self) -> BTreeMap<&str, &Example> {
        self.examples.iter().map(|e| (e.id.as_str(), e)).collect()
    }

    pub fn source_utterance<'a>(&self, example: &'a Example) -> &'a str {
        example
            .utterance(&self.source_lang)
            .expect("source utterance validated at construction")
    }

    /// Counted access to the target-language utterance of `example`.
    pub fn target_utterance<'a>(&self, example: &'a Example) -> Option<&'a str> {
        self.target_reads.fetch_add(1, Ordering::Relaxed);
        example.utterance(&self.target_lang)
    }

    /// Number of target-language reads made through this corpus and every
    /// corpus derived from it.
    pub fn target_reads(&self) -> usize {
        self.target_reads.load(Ordering::Relaxed)
    }

    /// Sub-corpus in the given id order; shares the read counter.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let index = self.index();
        let examples = ids
            .into_iter()
            .filter_map(|id| index.get(id).map(|e| (*e).clone()))
            .collect();
        Corpus {
            examples,
            source_lang: self.source_lang.clone(),
            target_lang: self.target_lang.clone(),
            target_reads: Arc::clone(&self.target_reads),
        }
    }

    /// Copy containing only source-language utterances.
    pub fn source_only(&self) -> Corpus {
        let examples = self
            .examples
            .iter()
            .map(|e| {
                Example::new(e.id.clone(), e.lf.clone())
                    .with_utterance(self.source_lang.clone(), self.source_utterance(e))
            })
            .collect();
        Corpus {
            examples,
            source_lang: self.source_lang.clone(),
            target_lang: self.target_lang.clone(),
            target_reads: Arc::clone(&self.target_reads),
        }
    }
}

/// Reads JSON Lines example records without any corpus-level validation.
/// Records are returned with their 1-based line numbers.
pub fn read_examples(path: impl AsRef<Path>) -> Result<Vec<(usize, Example)>, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        examples.push((i + 1, ex));
    }
    Ok(examples)
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    source_lang: &str,
    target_lang: &str,
) -> Result<Corpus, CorpusError> {
    let examples = read_examples(path)?;
    // Validate here first so errors carry physical line numbers.
    let mut seen = HashSet::new();
    for (line, ex) in &examples {
        if !seen.insert(ex.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: *line,
                id: ex.id.clone(),
            });
        }
        lf::parse_lf(&ex.lf).map_err(|source| CorpusError::Lf {
            line: *line,
            id: ex.id.clone(),
            source,
        })?;
    }
    Corpus::new(
        examples.into_iter().map(|(_, e)| e).collect(),
        source_lang,
        target_lang,
    )
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_examples(corpus.examples(), path)
}

pub fn write_examples(examples: &[Example], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("examples always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            dev_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Size of the held-out half: round-half-up, at least one when the
/// fraction is positive.
pub fn dev_size(total: usize, dev_fraction: f64) -> usize {
    if dev_fraction <= 0.0 {
        return 0;
    }
    ((dev_fraction * total as f64 + 0.5).floor() as usize).max(1)
}

/// Seeded shuffle split into (train, dev). Both halves keep file order.
pub fn split(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(0.0..1.0).contains(&spec.dev_fraction) {
        return Err(CorpusError::DevFraction(spec.dev_fraction));
    }
    let n = corpus.len();
    let n_dev = dev_size(n, spec.dev_fraction);
    if n_dev >= n {
        return Err(CorpusError::EmptyTrain {
            fraction: spec.dev_fraction,
            total: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut is_dev = vec![false; n];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let ids = |dev: bool| {
        corpus
            .examples()
            .iter()
            .zip(&is_dev)
            .filter(move |(_, &d)| d == dev)
            .map(|(e, _)| e.id.as_str())
    };
    Ok((corpus.subset(ids(false)), corpus.subset(ids(true))))
}
