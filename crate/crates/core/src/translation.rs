//! Human and machine translation, and the empirical distribution of target
//! utterances per LF.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::Corpus;
use crate::features::{fnv1a, source_tokens};
use crate::lf;
use crate::numerics::Distribution;

#[derive(Debug, Error)]
pub enum TranslationError {
    #[error("no gold {lang:?} translation for {id:?}")]
    MissingGold { id: String, lang: String },
    #[error("unknown example {0:?}")]
    UnknownExample(String),
    #[error("translation for {0:?} is empty")]
    EmptyTranslation(String),
    #[error("no target-language utterances to estimate from")]
    NoTargetData,
    #[error("LF {0:?} has no observed translations")]
    UnknownLf(String),
    #[error("n-best size must be at least 1")]
    ZeroN,
    #[error("cannot translate {0:?}")]
    Untranslatable(String),
    #[error("lexicon {path}: {message}")]
    Lexicon { path: String, message: String },
    #[error("translation session: {0}")]
    Session(String),
}

/// One example handed to a translator.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lf: Option<String>,
}

/// The human translator. Must return exactly one non-empty utterance per
/// requested id.
pub trait TranslationOracle: Send {
    fn translate(
        &mut self,
        round: usize,
        batch: &[BatchItem],
    ) -> Result<BTreeMap<String, String>, TranslationError>;
}

/// Simulated translator that reveals the gold target utterances already
/// present in the corpus.
pub struct GoldReveal {
    corpus: Corpus,
}

impl GoldReveal {
    pub fn new(corpus: Corpus) -> Self {
        GoldReveal { corpus }
    }
}

impl TranslationOracle for GoldReveal {
    fn translate(
        &mut self,
        _round: usize,
        batch: &[BatchItem],
    ) -> Result<BTreeMap<String, String>, TranslationError> {
        let index = self.corpus.index();
        let mut out = BTreeMap::new();
        for item in batch {
            let ex = index
                .get(item.id.as_str())
                .ok_or_else(|| TranslationError::UnknownExample(item.id.clone()))?;
            let text = self
                .corpus
                .target_utterance(ex)
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| TranslationError::MissingGold {
                    id: item.id.clone(),
                    lang: self.corpus.target_lang().to_string(),
                })?;
            out.insert(item.id.clone(), text.to_string());
        }
        Ok(out)
    }
}

/// A black-box machine translator with a back-translation direction.
pub trait MachineTranslator: Send + Sync {
    fn forward(&self, utterance: &str) -> Result<String, TranslationError>;
    fn backward(&self, utterance: &str) -> Result<String, TranslationError>;
}

pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Token-level MT stand-in. Each token is dropped with probability
/// `dropout`, decided by hashing (seed, direction, utterance, position), and
/// surviving tokens are substituted through a bilingual lexicon when an
/// entry exists. Output is a pure function of the input and seed.
#[derive(Debug, Clone)]
pub struct NoisyLexiconTranslator {
    forward: HashMap<String, String>,
    backward: HashMap<String, String>,
    dropout: f64,
    seed: u64,
}

impl NoisyLexiconTranslator {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>, dropout: f64, seed: u64) -> Self {
        let mut forward = HashMap::new();
        let mut backward = HashMap::new();
        for (s, t) in pairs {
            forward.entry(s.clone()).or_insert_with(|| t.clone());
            backward.entry(t).or_insert(s);
        }
        NoisyLexiconTranslator {
            forward,
            backward,
            dropout,
            seed,
        }
    }

    /// Reads `source<TAB>target` lines; blank lines and `#` comments are
    /// skipped.
    pub fn load(path: impl AsRef<Path>, dropout: f64, seed: u64) -> Result<Self, TranslationError> {
        let path = path.as_ref();
        let err = |message: String| TranslationError::Lexicon {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (s, t) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("line {}: expected source<TAB>target", i + 1)))?;
            pairs.push((s.trim().to_lowercase(), t.trim().to_lowercase()));
        }
        Ok(Self::new(pairs, dropout, seed))
    }

    fn apply(&self, utterance: &str, lexicon: &HashMap<String, String>, direction: u8) -> Result<String, TranslationError> {
        let tokens = source_tokens(utterance);
        if tokens.is_empty() {
            return Err(TranslationError::Untranslatable(utterance.to_string()));
        }
        let mut kept: Vec<&str> = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if self.keep(utterance, direction, i) {
                kept.push(lexicon.get(tok).map(String::as_str).unwrap_or(tok));
            }
        }
        if kept.is_empty() {
            let first = &tokens[0];
            kept.push(lexicon.get(first).map(String::as_str).unwrap_or(first));
        }
        Ok(kept.join(" "))
    }

    fn keep(&self, utterance: &str, direction: u8, position: usize) -> bool {
        let mut key = Vec::with_capacity(utterance.len() + 17);
        key.extend_from_slice(&self.seed.to_le_bytes());
        key.push(direction);
        key.extend_from_slice(utterance.as_bytes());
        key.extend_from_slice(&(position as u64).to_le_bytes());
        let u = (fnv1a(&key) >> 11) as f64 / (1u64 << 53) as f64;
        u >= self.dropout
    }
}

impl MachineTranslator for NoisyLexiconTranslator {
    fn forward(&self, utterance: &str) -> Result<String, TranslationError> {
        self.apply(utterance, &self.forward, 0)
    }

    fn backward(&self, utterance: &str) -> Result<String, TranslationError> {
        self.apply(utterance, &self.backward, 1)
    }
}

/// `P(x_t | y)`: for each LF, relative frequencies of the distinct target
/// utterances observed with it. Source utterances sharing an LF therefore
/// share a distribution.
#[derive(Debug, Clone, Default)]
pub struct TargetDistribution {
    per_lf: BTreeMap<String, BTreeMap<String, u64>>,
}

impl TargetDistribution {
    /// `pairs` are (LF, target utterance); LFs are keyed by their normalized
    /// token form.
    pub fn fit<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, TranslationError> {
        let mut per_lf: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for (lf_text, utt) in pairs {
            *per_lf
                .entry(lf::normalize(lf_text))
                .or_default()
                .entry(utt.to_string())
                .or_default() += 1;
        }
        if per_lf.is_empty() {
            return Err(TranslationError::NoTargetData);
        }
        Ok(TargetDistribution { per_lf })
    }

    pub fn contains(&self, lf_text: &str) -> bool {
        self.per_lf.contains_key(&lf::normalize(lf_text))
    }

    pub fn lf_count(&self) -> usize {
        self.per_lf.len()
    }

    /// Distinct utterances of `lf_text` with their probabilities, in
    /// lexicographic utterance order.
    pub fn row(&self, lf_text: &str) -> Result<Vec<(String, f64)>, TranslationError> {
        let key = lf::normalize(lf_text);
        let row = self
            .per_lf
            .get(&key)
            .ok_or(TranslationError::UnknownLf(key))?;
        let total: u64 = row.values().sum();
        Ok(row
            .iter()
            .map(|(u, &c)| (u.clone(), c as f64 / total as f64))
            .collect())
    }

    pub fn distribution(&self, lf_text: &str) -> Result<Distribution, TranslationError> {
        let probs = self.row(lf_text)?.into_iter().map(|(_, p)| p).collect();
        Ok(Distribution::new(probs).expect("relative frequencies form a distribution"))
    }

    /// Top `n` utterances by probability (ties to the lexicographically
    /// smaller utterance), renormalized over the returned set.
    pub fn nbest(&self, lf_text: &str, n: usize) -> Result<Vec<(String, f64)>, TranslationError> {
        if n == 0 {
            return Err(TranslationError::ZeroN);
        }
        let mut row = self.row(lf_text)?;
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        row.truncate(n);
        let mass: f64 = row.iter().map(|(_, p)| p).sum();
        Ok(row.into_iter().map(|(u, p)| (u, p / mass)).collect())
    }

    pub fn max_probability(&self, lf_text: &str) -> Result<f64, TranslationError> {
        Ok(self
            .row(lf_text)?
            .into_iter()
            .map(|(_, p)| p)
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::numerics::entropy;
    use crate::testutil::{toy4, BORDER_TEXAS};

    #[test]
    fn relative_frequencies() {
        let d = TargetDistribution::fit([("( y )", "u1"), ("( y )", "u1"), ("( y )", "u2")]).unwrap();
        let row = d.row("(y)").unwrap();
        assert_eq!(row, vec![("u1".to_string(), 2.0 / 3.0), ("u2".to_string(), 1.0 / 3.0)]);
        assert!(matches!(TargetDistribution::fit(std::iter::empty()), Err(TranslationError::NoTargetData)));
        assert!(matches!(d.row("( z )"), Err(TranslationError::UnknownLf(_))));
    }

    #[test]
    fn point_mass_has_zero_entropy() {
        let d = TargetDistribution::fit([("( y )", "mt output")]).unwrap();
        assert_eq!(d.distribution("( y )").unwrap().entropy(), 0.0);
    }

    #[test]
    fn toy4_revealed_variants_are_uniform() {
        let c = toy4();
        let revealed: BTreeMap<&str, &str> =
            [("E1", "welche staaten grenzen an texas"), ("E2", "welche staaten sind nachbarn von texas")]
                .into_iter()
                .collect();
        let pairs: Vec<(&str, &str)> = c
            .examples()
            .iter()
            .filter_map(|e| revealed.get(e.id.as_str()).map(|t| (e.lf.as_str(), *t)))
            .collect();
        let d = TargetDistribution::fit(pairs).unwrap();
        // Count oracle: two distinct utterances, one each.
        let h = entropy(&[0.5, 0.5]).unwrap();
        assert!((d.distribution(BORDER_TEXAS).unwrap().entropy() - h).abs() < 1e-15);
        assert!((h - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nbest_renormalizes() {
        let d = TargetDistribution::fit([("( y )", "only")]).unwrap();
        assert_eq!(d.nbest("( y )", 5).unwrap(), vec![("only".to_string(), 1.0)]);

        let d = TargetDistribution::fit([("( y )", "c"), ("( y )", "a"), ("( y )", "b")]).unwrap();
        assert_eq!(
            d.nbest("( y )", 2).unwrap(),
            vec![("a".to_string(), 0.5), ("b".to_string(), 0.5)]
        );

        let pairs: Vec<(&str, &str)> = std::iter::repeat_n(("( y )", "p"), 5)
            .chain(std::iter::repeat_n(("( y )", "q"), 3))
            .chain(std::iter::repeat_n(("( y )", "r"), 2))
            .collect();
        let d = TargetDistribution::fit(pairs).unwrap();
        let nb = d.nbest("( y )", 2).unwrap();
        assert_eq!(nb[0].0, "p");
        assert!((nb[0].1 - 0.625).abs() < 1e-15);
        assert!((nb[1].1 - 0.375).abs() < 1e-15);
        assert!(matches!(d.nbest("( y )", 0), Err(TranslationError::ZeroN)));
    }

    #[test]
    fn gold_reveal_returns_hidden_translations() {
        let examples = vec![
            Example::new("a", "( f )").with_utterance("en", "one").with_utterance("de", "eins"),
            Example::new("b", "( g )").with_utterance("en", "two"),
        ];
        let corpus = Corpus::new(examples, "en", "de").unwrap();
        let mut oracle = GoldReveal::new(corpus.clone());
        let item = |id: &str| BatchItem {
            id: id.into(),
            source: String::new(),
            lf: None,
        };
        let out = oracle.translate(1, &[item("a")]).unwrap();
        assert_eq!(out["a"], "eins");
        assert_eq!(corpus.target_reads(), 1);
        assert!(matches!(oracle.translate(1, &[item("b")]), Err(TranslationError::MissingGold { .. })));
        assert!(matches!(oracle.translate(1, &[item("zz")]), Err(TranslationError::UnknownExample(_))));
    }

    #[test]
    fn noisy_translator_is_deterministic_and_substitutes() {
        let lex = vec![("states".to_string(), "staaten".to_string()), ("texas".to_string(), "texas".to_string())];
        let mt = NoisyLexiconTranslator::new(lex.clone(), 0.0, 3);
        assert_eq!(mt.forward("Which states border Texas?").unwrap(), "which staaten border texas");
        assert_eq!(mt.backward("staaten").unwrap(), "states");

        let noisy = NoisyLexiconTranslator::new(lex, 0.5, 3);
        let a = noisy.forward("one two three four five six seven eight").unwrap();
        assert_eq!(a, noisy.forward("one two three four five six seven eight").unwrap());
        assert!(a.split(' ').count() < 8);
        let all_drop = NoisyLexiconTranslator::new(Vec::new(), 1.0, 0);
        assert_eq!(all_drop.forward("keep me").unwrap(), "keep");
        assert!(all_drop.forward("?!").is_err());
    }

    #[test]
    fn lexicon_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        fs::write(&p, "# en\tde\nstate\tstaat\n\ncity\tstadt\n").unwrap();
        let mt = NoisyLexiconTranslator::load(&p, 0.0, 0).unwrap();
        assert_eq!(mt.forward("state city").unwrap(), "staat stadt");
        fs::write(&p, "no tab here\n").unwrap();
        assert!(NoisyLexiconTranslator::load(&p, 0.0, 0).is_err());
    }
}
