//! The select, translate, retrain loop.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{self, AcquisitionConfig, AcquisitionError, Selection, SelectionContext, Strategy};
use crate::corpus::{self, Corpus, CorpusError, Example, SplitSpec};
use crate::features::{FeatureError, NgramEmbedder, PrecomputedEmbedder, UtteranceEmbedder};
use crate::lf::{self, LfError};
use crate::parser::{ParserAdapter, ParserError, ProcessParser, SurrogateParser};
use crate::translation::{
    BatchItem, GoldReveal, MachineTranslator, NoisyLexiconTranslator, TargetDistribution, TranslationError,
    TranslationOracle, DEFAULT_DROPOUT,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("budget percentages must be strictly increasing and positive: {0:?}")]
    Percents(Vec<f64>),
    #[error("round {round} needs {needed} candidates, only {available} remain")]
    InsufficientCandidates { round: usize, needed: usize, available: usize },
    #[error("campaign already finished")]
    Finished,
    #[error("oracle answered round {round} with {message}")]
    Oracle { round: usize, message: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Lf(#[from] LfError),
}

pub type Result<T, E = CampaignError> = std::result::Result<T, E>;

pub const DEFAULT_PERCENTS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// Per-round sizes `K_q` for accumulative percentages of `n`.
/// Cumulative targets are `max(1, round(p · n / 100))`.
pub fn budget_sizes(n: usize, percents: &[f64]) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(CampaignError::Config("pool is empty".into()));
    }
    let valid = percents.iter().all(|p| p.is_finite() && *p > 0.0 && *p <= 100.0)
        && percents.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(CampaignError::Percents(percents.to_vec()));
    }
    let mut prev = 0;
    Ok(percents
        .iter()
        .map(|p| {
            let c = ((p * n as f64 / 100.0).round() as usize).max(1);
            let k = c.saturating_sub(prev);
            prev = prev.max(c);
            k
        })
        .collect())
}

pub fn cumulative(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, k| {
            *acc += k;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Train on source data plus human translations.
    #[default]
    #[serde(rename = "al-msp")]
    AlMsp,
    /// Additionally train on machine translations of every source example.
    #[serde(rename = "amsp")]
    Amsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    GoldReveal,
    HumanSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParserSpec {
    Surrogate {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    /// External process speaking the JSON-lines adapter protocol.
    Process {
        command: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for ParserSpec {
    fn default() -> Self {
        ParserSpec::Surrogate {
            temperature: default_temperature(),
        }
    }
}

impl ParserSpec {
    pub fn build(&self) -> Result<Box<dyn ParserAdapter>> {
        Ok(match self {
            ParserSpec::Surrogate { temperature } => {
                if !(*temperature > 0.0) {
                    return Err(CampaignError::Config("parser temperature must be positive".into()));
                }
                Box::new(SurrogateParser::with_temperature(*temperature))
            }
            ParserSpec::Process { command, args } => Box::new(ProcessParser::spawn(command, args)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorSpec {
    /// Tab-separated bilingual lexicon.
    pub lexicon: PathBuf,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSpec {
    #[default]
    Ngram,
    /// JSON lines of `{"id": ..., "vector": [...]}`.
    Precomputed { path: PathBuf },
}

fn default_percents() -> Vec<f64> {
    DEFAULT_PERCENTS.to_vec()
}
fn default_source() -> String {
    "en".into()
}
fn default_target() -> String {
    "de".into()
}
fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Pool of source examples; target utterances, if present, are only
    /// read by the gold-reveal oracle.
    pub corpus: PathBuf,
    /// Held-out evaluation corpus; when absent, `test_fraction` of the pool
    /// is held out instead.
    #[serde(default)]
    pub test_corpus: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_source")]
    pub source_lang: String,
    #[serde(default = "default_target")]
    pub target_lang: String,
    #[serde(default)]
    pub mode: Mode,
    /// Must equal the number of budget percentages when given.
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default = "default_percents")]
    pub budget_percents: Vec<f64>,
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub parser: ParserSpec,
    #[serde(default)]
    pub oracle: OracleKind,
    #[serde(default)]
    pub translator: Option<TranslatorSpec>,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default)]
    pub seed: u64,
    /// Directory for metrics and per-round selection lists.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn new(corpus: impl Into<PathBuf>, strategy: Strategy) -> Self {
        CampaignConfig {
            corpus: corpus.into(),
            test_corpus: None,
            test_fraction: default_test_fraction(),
            source_lang: default_source(),
            target_lang: default_target(),
            mode: Mode::AlMsp,
            rounds: None,
            budget_percents: default_percents(),
            acquisition: AcquisitionConfig::new(strategy),
            parser: ParserSpec::default(),
            oracle: OracleKind::GoldReveal,
            translator: None,
            embedder: EmbedderSpec::Ngram,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }

    /// Reads a TOML config; relative paths are resolved against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CampaignError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        if let Some(p) = self.test_corpus.as_mut() {
            fix(p);
        }
        if let Some(t) = self.translator.as_mut() {
            fix(&mut t.lexicon);
        }
        if let EmbedderSpec::Precomputed { path } = &mut self.embedder {
            fix(path);
        }
        if let Some(p) = self.output_dir.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        if self.budget_percents.is_empty() && self.rounds.unwrap_or(0) != 0 {
            return Err(CampaignError::Config("rounds given without budget percentages".into()));
        }
        budget_sizes(1, &self.budget_percents).or_else(|e| {
            if self.budget_percents.is_empty() {
                Ok(Vec::new())
            } else {
                Err(e)
            }
        })?;
        if let Some(q) = self.rounds {
            if q != self.budget_percents.len() {
                return Err(CampaignError::Config(format!(
                    "rounds = {q} but {} budget percentages given",
                    self.budget_percents.len()
                )));
            }
        }
        if self.source_lang == self.target_lang {
            return Err(CampaignError::Config("source and target languages must differ".into()));
        }
        if self.test_corpus.is_none() && !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CampaignError::Config("test_fraction must lie in (0, 1)".into()));
        }
        if self.acquisition.strategy.is_amsp() && self.mode != Mode::Amsp {
            return Err(CampaignError::Config(format!(
                "strategy {} needs mode = \"amsp\"",
                self.acquisition.strategy
            )));
        }
        if self.mode == Mode::Amsp && self.translator.is_none() {
            return Err(CampaignError::Config("mode = \"amsp\" needs a [translator] section".into()));
        }
        if let Some(t) = &self.translator {
            if !(0.0..1.0).contains(&t.dropout) {
                return Err(CampaignError::Config("translator dropout must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.budget_percents.len()
    }

    /// Loads the pool and test corpora.
    pub fn load_corpora(&self) -> Result<(Corpus, Corpus)> {
        let all = corpus::load_corpus(&self.corpus, &self.source_lang, &self.target_lang)?;
        match &self.test_corpus {
            Some(p) => Ok((all, corpus::load_corpus(p, &self.source_lang, &self.target_lang)?)),
            None => Ok(corpus::split(
                &all,
                SplitSpec {
                    dev_fraction: self.test_fraction,
                    seed: self.seed,
                },
            )?),
        }
    }

    pub fn build_translator(&self) -> Result<Option<Box<dyn MachineTranslator>>> {
        Ok(match &self.translator {
            Some(t) => Some(Box::new(NoisyLexiconTranslator::load(&t.lexicon, t.dropout, t.seed)?)),
            None => None,
        })
    }

    pub fn build_embedder(&self) -> Result<Box<dyn UtteranceEmbedder>> {
        Ok(match &self.embedder {
            EmbedderSpec::Ngram => Box::new(NgramEmbedder),
            EmbedderSpec::Precomputed { path } => Box::new(PrecomputedEmbedder::load(path)?),
        })
    }
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub round: usize,
    pub cumulative_budget: usize,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
    pub compound_coverage: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CampaignState {
    /// Rounds completed; 0 after the zero-shot evaluation.
    pub round: usize,
    pub budgets: Vec<usize>,
    /// Ids still available for selection, in pool order.
    pub untranslated: Vec<String>,
    /// Translated examples in selection order: source utterance plus the
    /// oracle's target utterance.
    pub translated: Vec<Example>,
    pub selections: Vec<Vec<String>>,
    pub metrics: Vec<MetricsRecord>,
    /// Times the target-language distribution was re-estimated.
    pub distribution_fits: usize,
}

impl CampaignState {
    /// Disjoint selections, budget sums, and pool exclusion.
    pub fn check_invariants(&self, pool_size: usize) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (q, sel) in self.selections.iter().enumerate() {
            if sel.len() != self.budgets[q] {
                return Err(format!("round {} selected {} of {}", q + 1, sel.len(), self.budgets[q]));
            }
            for id in sel {
                if !seen.insert(id.as_str()) {
                    return Err(format!("{id} selected twice"));
                }
            }
        }
        let expected: usize = self.budgets[..self.selections.len()].iter().sum();
        if self.translated.len() != expected {
            return Err(format!("{} translated, expected {expected}", self.translated.len()));
        }
        if self.untranslated.iter().any(|id| seen.contains(id.as_str())) {
            return Err("a selected id is still in the pool".into());
        }
        if self.untranslated.len() + self.translated.len() != pool_size {
            return Err("pool and translated set do not partition the corpus".into());
        }
        Ok(())
    }

    pub fn cumulative_budget(&self) -> usize {
        self.translated.len()
    }
}

/// A running campaign: state plus the adapters it drives.
pub struct Campaign {
    config: CampaignConfig,
    pool: Corpus,
    test: Corpus,
    parser: Box<dyn ParserAdapter>,
    oracle: Box<dyn TranslationOracle>,
    translator: Option<Box<dyn MachineTranslator>>,
    embedder: Box<dyn UtteranceEmbedder>,
    machine_translated: Vec<Example>,
    pool_compounds: BTreeSet<String>,
    state: CampaignState,
    history: Vec<Selection>,
    started: bool,
}

impl Campaign {
    pub fn new(
        config: CampaignConfig,
        pool: Corpus,
        test: Corpus,
        parser: Box<dyn ParserAdapter>,
        oracle: Box<dyn TranslationOracle>,
        translator: Option<Box<dyn MachineTranslator>>,
        embedder: Box<dyn UtteranceEmbedder>,
    ) -> Result<Self> {
        config.validate()?;
        if config.mode == Mode::Amsp && translator.is_none() {
            return Err(CampaignError::Config("mode = \"amsp\" needs a machine translator".into()));
        }
        if test.is_empty() {
            return Err(CampaignError::Config("test corpus is empty".into()));
        }
        let budgets = if config.budget_percents.is_empty() {
            Vec::new()
        } else {
            budget_sizes(pool.len(), &config.budget_percents)?
        };
        let mut acq = config.acquisition.clone();
        acq.seed ^= config.seed;
        let mut pool_compounds = BTreeSet::new();
        for e in pool.examples() {
            pool_compounds.extend(compound_types(e)?);
        }
        let state = CampaignState {
            round: 0,
            budgets,
            untranslated: pool.examples().iter().map(|e| e.id.clone()).collect(),
            ..CampaignState::default()
        };
        Ok(Campaign {
            config: CampaignConfig { acquisition: acq, ..config },
            pool,
            test,
            parser,
            oracle,
            translator,
            embedder,
            machine_translated: Vec::new(),
            pool_compounds,
            state,
            history: Vec::new(),
            started: false,
        })
    }

    /// Builds every adapter from `config`, with the gold-reveal oracle.
    pub fn from_config(config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        if config.oracle == OracleKind::HumanSession {
            return Err(CampaignError::Config(
                "the human_session oracle is only available through the annotation service".into(),
            ));
        }
        let (pool, test) = config.load_corpora()?;
        let oracle = Box::new(GoldReveal::new(pool.clone()));
        Self::with_oracle(config, pool, test, oracle)
    }

    pub fn with_oracle(
        config: CampaignConfig,
        pool: Corpus,
        test: Corpus,
        oracle: Box<dyn TranslationOracle>,
    ) -> Result<Self> {
        let parser = config.parser.build()?;
        let translator = config.build_translator()?;
        let embedder = config.build_embedder()?;
        Self::new(config, pool, test, parser, oracle, translator, embedder)
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn pool(&self) -> &Corpus {
        &self.pool
    }

    /// Per-round selections with the models that produced them.
    pub fn history(&self) -> &[Selection] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.started && self.state.round >= self.state.budgets.len()
    }

    /// Training data for the current state.
    pub fn training_data(&self) -> Vec<Example> {
        let revealed: BTreeMap<&str, &Example> =
            self.state.translated.iter().map(|e| (e.id.as_str(), e)).collect();
        let src = self.pool.source_lang();
        let tgt = self.pool.target_lang();
        let mut data: Vec<Example> = self
            .pool
            .examples()
            .iter()
            .map(|e| {
                let mut out = Example::new(e.id.clone(), e.lf.clone()).with_utterance(src, self.pool.source_utterance(e));
                if let Some(t) = revealed.get(e.id.as_str()).and_then(|t| t.utterance(tgt)) {
                    out = out.with_utterance(tgt, t);
                }
                out
            })
            .collect();
        data.extend(self.machine_translated.iter().cloned());
        data
    }

    /// Zero-shot round: machine-translate the pool in AMSP mode, train and
    /// evaluate.
    pub fn start(&mut self) -> Result<&MetricsRecord> {
        if self.started {
            return Err(CampaignError::Config("campaign already started".into()));
        }
        if self.config.mode == Mode::Amsp {
            let mt = self.translator.as_ref().expect("checked at construction");
            let tgt = self.pool.target_lang().to_string();
            self.machine_translated = self
                .pool
                .examples()
                .iter()
                .map(|e| {
                    let text = mt.forward(self.pool.source_utterance(e))?;
                    Ok(Example::new(format!("{}#mt", e.id), e.lf.clone()).with_utterance(tgt.clone(), text))
                })
                .collect::<Result<_>>()?;
        }
        self.started = true;
        self.retrain_and_evaluate()
    }

    /// One select, translate, merge, retrain, evaluate step.
    pub fn run_round(&mut self) -> Result<&MetricsRecord> {
        if !self.started {
            self.start()?;
        }
        if self.is_finished() {
            return Err(CampaignError::Finished);
        }
        let q = self.state.round + 1;
        let k = self.state.budgets[q - 1];
        let available = self.state.untranslated.len();
        if k > available {
            return Err(CampaignError::InsufficientCandidates {
                round: q,
                needed: k,
                available,
            });
        }

        let ids = if k == 0 {
            self.history.push(Selection {
                picks: Vec::new(),
                lfsd_clustering: None,
                semdiv_clustering: None,
            });
            Vec::new()
        } else {
            let selection = self.select(q, k)?;
            let ids = selection.ids();
            self.history.push(selection);
            ids
        };

        let translations = self.translate(q, &ids)?;

        let picked: HashSet<&str> = ids.iter().map(String::as_str).collect();
        self.state.untranslated.retain(|id| !picked.contains(id.as_str()));
        let index = self.pool.index();
        let src = self.pool.source_lang();
        let tgt = self.pool.target_lang();
        for id in &ids {
            let e = index[id.as_str()];
            self.state.translated.push(
                Example::new(id.clone(), e.lf.clone())
                    .with_utterance(src, self.pool.source_utterance(e))
                    .with_utterance(tgt, translations[id].clone()),
            );
        }
        self.state.selections.push(ids);
        self.state.round = q;
        self.retrain_and_evaluate()
    }

    /// Runs every remaining round.
    pub fn run(&mut self) -> Result<&CampaignState> {
        if !self.started {
            self.start()?;
        }
        while !self.is_finished() {
            self.run_round()?;
        }
        Ok(&self.state)
    }

    fn select(&mut self, round: usize, k: usize) -> Result<Selection> {
        let index = self.pool.index();
        let candidates: Vec<&Example> = self.state.untranslated.iter().map(|id| index[id.as_str()]).collect();
        let translated: Vec<&Example> = self.state.translated.iter().collect();
        let strategy = self.config.acquisition.strategy;

        let distribution = if strategy.is_amsp() {
            let tgt = self.pool.target_lang();
            let pairs = self
                .machine_translated
                .iter()
                .chain(&self.state.translated)
                .filter_map(|e| e.utterance(tgt).map(|u| (e.lf.as_str(), u)));
            self.state.distribution_fits += 1;
            Some(TargetDistribution::fit(pairs)?)
        } else {
            None
        };

        let ctx = SelectionContext {
            candidates,
            translated,
            source_lang: self.pool.source_lang(),
            round,
            parser: Some(self.parser.as_ref()),
            target_distribution: distribution.as_ref(),
            translator: self.translator.as_deref(),
            embedder: self.embedder.as_ref(),
        };
        let selection = acquisition::select(&self.config.acquisition, &ctx, k).map_err(|e| match e {
            AcquisitionError::InsufficientCandidates { needed, available } => CampaignError::InsufficientCandidates {
                round,
                needed,
                available,
            },
            other => other.into(),
        })?;
        log::info!("round {round}: selected {} examples with {strategy}", selection.picks.len());
        Ok(selection)
    }

    fn translate(&mut self, round: usize, ids: &[String]) -> Result<BTreeMap<String, String>> {
        if ids.is_empty() {
            return Ok(BTreeMap::new());
        }
        let index = self.pool.index();
        let batch: Vec<BatchItem> = ids
            .iter()
            .map(|id| BatchItem {
                id: id.clone(),
                source: self.pool.source_utterance(index[id.as_str()]).to_string(),
                lf: None,
            })
            .collect();
        let out = self.oracle.translate(round, &batch)?;
        let oracle_err = |message: String| CampaignError::Oracle { round, message };
        if out.len() != ids.len() {
            return Err(oracle_err(format!("{} translations for {} requests", out.len(), ids.len())));
        }
        for id in ids {
            match out.get(id) {
                None => return Err(oracle_err(format!("no translation for {id:?}"))),
                Some(t) if t.trim().is_empty() => return Err(oracle_err(format!("empty translation for {id:?}"))),
                _ => {}
            }
        }
        Ok(out)
    }

    fn retrain_and_evaluate(&mut self) -> Result<&MetricsRecord> {
        let data = self.training_data();
        self.parser.train(&data)?;
        let source_accuracy = self.parser.evaluate(&language_view(&self.test, self.test.source_lang()))?;
        let target_view = language_view(&self.test, self.test.target_lang());
        let target_accuracy = if target_view.is_empty() {
            0.0
        } else {
            self.parser.evaluate(&target_view)?
        };
        let mut covered = BTreeSet::new();
        for e in &self.state.translated {
            covered.extend(compound_types(e)?);
        }
        let compound_coverage = if self.pool_compounds.is_empty() {
            0.0
        } else {
            covered.len() as f64 / self.pool_compounds.len() as f64
        };
        let record = MetricsRecord {
            round: self.state.round,
            cumulative_budget: self.state.cumulative_budget(),
            source_accuracy,
            target_accuracy,
            compound_coverage,
            strategy: self.config.acquisition.strategy,
            seed: self.config.seed,
        };
        log::info!(
            "round {}: budget {} source {:.4} target {:.4} coverage {:.4}",
            record.round,
            record.cumulative_budget,
            record.source_accuracy,
            record.target_accuracy,
            record.compound_coverage
        );
        self.state.metrics.push(record);
        Ok(self.state.metrics.last().expect("just pushed"))
    }
}

fn compound_types(e: &Example) -> Result<Vec<String>> {
    let tree = lf::parse_lf(&e.lf)?;
    Ok(lf::extract_compounds(&tree).iter().map(|c| c.to_string()).collect())
}

/// Test examples restricted to one language. Target text is read through
/// the counted accessor.
fn language_view(test: &Corpus, lang: &str) -> Vec<Example> {
    test.examples()
        .iter()
        .filter_map(|e| {
            let text = if lang == test.source_lang() {
                Some(test.source_utterance(e))
            } else {
                test.target_utterance(e)
            }?;
            Some(Example::new(e.id.clone(), e.lf.clone()).with_utterance(lang, text))
        })
        .collect()
}

/// Runs a full gold-reveal campaign from a config.
pub fn run_campaign(config: CampaignConfig) -> Result<CampaignState> {
    let mut campaign = Campaign::from_config(config)?;
    campaign.run()?;
    if let Some(dir) = &campaign.config().output_dir {
        write_outputs(campaign.state(), dir)?;
    }
    Ok(campaign.state().clone())
}

pub fn metrics_to_string(records: &[MetricsRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("metrics serialize") + "\n")
        .collect()
}

/// Writes the metrics records as JSON lines.
pub fn report_metrics(state: &CampaignState, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &metrics_to_string(&state.metrics))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let io = |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CampaignError::Config(e.to_string()))?);
    }
    Ok(out)
}

/// `metrics.jsonl` plus `selections/round_<q>.txt` with one id per line.
pub fn write_outputs(state: &CampaignState, dir: &Path) -> Result<()> {
    let sel_dir = dir.join("selections");
    fs::create_dir_all(&sel_dir).map_err(|source| CampaignError::Io {
        path: sel_dir.display().to_string(),
        source,
    })?;
    report_metrics(state, dir.join("metrics.jsonl"))?;
    for (q, ids) in state.selections.iter().enumerate() {
        let body: String = ids.iter().map(|id| format!("{id}\n")).collect();
        write_file(&sel_dir.join(format!("round_{}.txt", q + 1)), &body)?;
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let io = |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(body.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy4_bilingual as toy4;

    #[test]
    fn budget_examples() {
        let k = budget_sizes(1000, &DEFAULT_PERCENTS).unwrap();
        assert_eq!(k, [10, 10, 20, 40, 80, 160]);
        assert_eq!(cumulative(&k), [10, 20, 40, 80, 160, 320]);
        assert_eq!(budget_sizes(100, &[1.0]).unwrap(), [1]);
        assert_eq!(cumulative(&budget_sizes(600, &DEFAULT_PERCENTS).unwrap()), [6, 12, 24, 48, 96, 192]);
        assert_eq!(budget_sizes(10, &[1.0, 2.0]).unwrap(), [1, 0]);
        assert!(budget_sizes(100, &[2.0, 1.0]).is_err());
        assert!(budget_sizes(100, &[1.0, 1.0]).is_err());
        assert!(budget_sizes(0, &[1.0]).is_err());
    }

    fn toy_campaign(strategy: Strategy, percents: Vec<f64>) -> Campaign {
        let pool = toy4();
        let test = toy4();
        let mut config = CampaignConfig::new("unused", strategy);
        config.budget_percents = percents;
        let oracle = Box::new(GoldReveal::new(pool.clone()));
        Campaign::with_oracle(config, pool, test, oracle).unwrap()
    }

    #[test]
    fn one_round_reveals_translations() {
        let mut c = toy_campaign(Strategy::Random, vec![50.0]);
        c.start().unwrap();
        assert_eq!(c.state().metrics.len(), 1);
        c.run_round().unwrap();
        let s = c.state();
        assert_eq!(s.translated.len(), 2);
        assert_eq!(s.untranslated.len(), 2);
        assert!(s.translated.iter().all(|e| e.utterance("de").is_some()));
        s.check_invariants(4).unwrap();
        assert!(c.is_finished());
        assert!(matches!(c.run_round(), Err(CampaignError::Finished)));
    }

    #[test]
    fn consecutive_rounds_are_disjoint() {
        let mut c = toy_campaign(Strategy::Lcd, vec![25.0, 50.0, 100.0]);
        let mut last = 4;
        c.start().unwrap();
        while !c.is_finished() {
            c.run_round().unwrap();
            c.state().check_invariants(4).unwrap();
            assert!(c.state().untranslated.len() < last);
            last = c.state().untranslated.len();
        }
        assert_eq!(c.state().metrics.last().unwrap().compound_coverage, 1.0);
    }

    #[test]
    fn zero_rounds_only_evaluates() {
        let mut c = toy_campaign(Strategy::Random, vec![]);
        c.run().unwrap();
        assert_eq!(c.state().metrics.len(), 1);
        assert_eq!(c.state().metrics[0].round, 0);
        assert_eq!(c.state().metrics[0].source_accuracy, 1.0);
    }

    #[test]
    fn training_never_sees_unrevealed_targets() {
        let mut c = toy_campaign(Strategy::Random, vec![25.0]);
        c.run().unwrap();
        let with_target = c.training_data().iter().filter(|e| e.utterance("de").is_some()).count();
        assert_eq!(with_target, 1);
    }

    #[test]
    fn config_toml_round_trip_and_checks() {
        let text = r#"
corpus = "pool.jsonl"
test_corpus = "test.jsonl"
budget_percents = [1, 2, 4]
seed = 3

[acquisition]
strategy = "LFS-LC-D"
alpha = 0.5
beta = 0.25
"#;
        let mut c = CampaignConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.rounds(), 3);
        assert_eq!(CampaignConfig::from_toml(&c.to_toml()).unwrap(), c);
        c.resolve_paths(Path::new("/data"));
        assert_eq!(c.corpus, Path::new("/data/pool.jsonl"));

        let bad = text.replace("LFS-LC-D", "CSSE");
        assert!(CampaignConfig::from_toml(&bad).is_err());
        let amsp = text.replace("LFS-LC-D", "AMSP_NBEST");
        assert!(CampaignConfig::from_toml(&amsp).unwrap().validate().is_err());
        let mut rounds = CampaignConfig::from_toml(text).unwrap();
        rounds.rounds = Some(2);
        assert!(rounds.validate().is_err());
    }

    #[test]
    fn human_session_needs_the_service() {
        let mut config = CampaignConfig::new("missing.jsonl", Strategy::Random);
        config.oracle = OracleKind::HumanSession;
        let err = Campaign::from_config(config).err().unwrap();
        assert!(err.to_string().contains("annotation service"));
    }

    #[test]
    fn metrics_round_trip() {
        let mut c = toy_campaign(Strategy::Random, vec![50.0, 100.0]);
        c.run().unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(c.state(), dir.path()).unwrap();
        let back = read_metrics(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(back, c.state().metrics);
        assert_eq!(back.len(), 3);
        let r1 = fs::read_to_string(dir.path().join("selections/round_1.txt")).unwrap();
        assert_eq!(r1.lines().count(), 2);
    }
}
