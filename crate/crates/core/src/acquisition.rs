//! Acquisition functions and batch selection.
//!
//! Scores are "higher is better"; `-inf` marks an example that must not be
//! picked. Strategies whose scores depend on what has already been chosen
//! (cluster exclusion, covered atoms/compounds) are re-scored after every
//! pick, so a batch of `K` is built one example at a time.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterError, Clustering, Point};
use crate::corpus::Example;
use crate::features::{CooccurrenceModel, FeatureError, TfidfModel, UtteranceEmbedder};
use crate::lf::{self, UnitKind};
use crate::numerics::{self, NumericsError, ScoreVector};
use crate::parser::{ParserAdapter, ParserError};
use crate::sparse::SparseVector;
use crate::translation::{MachineTranslator, TargetDistribution, TranslationError};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("invalid acquisition config: {0}")]
    Config(String),
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("need {needed} selectable candidates, only {available} have a finite score")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("example {0:?} has no atoms or compounds of the configured kind")]
    EmptyUnits(String),
    #[error("unknown acquisition component {0:?}")]
    UnknownComponent(String),
    #[error("score vectors cover different ids")]
    MismatchedIds,
    #[error("{clusters} clusters cannot separate an accumulated budget of {budget}")]
    TooFewClusters { clusters: usize, budget: usize },
    #[error("strategy {strategy} needs {what}")]
    MissingContext { strategy: Strategy, what: &'static str },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Lf(#[from] lf::LfError),
}

type Result<T> = std::result::Result<T, AcquisitionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "LFSD")]
    Lfsd,
    #[serde(rename = "LCD")]
    Lcd,
    #[serde(rename = "LFS-LC-D")]
    LfsLcD,
    #[serde(rename = "AMSP_NBEST")]
    AmspNbest,
    #[serde(rename = "AMSP_MAX")]
    AmspMax,
    #[serde(rename = "RANDOM")]
    Random,
    #[serde(rename = "S2S_FW")]
    S2sFw,
    #[serde(rename = "MAX_COMPOUND")]
    MaxCompound,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Lfsd,
        Strategy::Lcd,
        Strategy::LfsLcD,
        Strategy::AmspNbest,
        Strategy::AmspMax,
        Strategy::Random,
        Strategy::S2sFw,
        Strategy::MaxCompound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Lfsd => "LFSD",
            Strategy::Lcd => "LCD",
            Strategy::LfsLcD => "LFS-LC-D",
            Strategy::AmspNbest => "AMSP_NBEST",
            Strategy::AmspMax => "AMSP_MAX",
            Strategy::Random => "RANDOM",
            Strategy::S2sFw => "S2S_FW",
            Strategy::MaxCompound => "MAX_COMPOUND",
        }
    }

    pub fn is_amsp(self) -> bool {
        matches!(self, Strategy::AmspNbest | Strategy::AmspMax)
    }

    pub fn variant(self) -> Variant {
        match self {
            Strategy::AmspMax => Variant::Max,
            _ => Variant::Nbest,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase().replace('_', "-");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().replace('_', "-") == wanted)
            .ok_or_else(|| AcquisitionError::Config(format!("unknown strategy {s:?}")))
    }
}

/// Approximation used for the translation bias and error components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nbest,
    Max,
}

pub const BIAS: &str = "bias";
pub const ERROR: &str = "error";
pub const DENSITY: &str = "density";
pub const DIVERSITY: &str = "semdiv";
pub const AMSP_COMPONENTS: [&str; 4] = [BIAS, ERROR, DENSITY, DIVERSITY];

fn default_alpha() -> f64 {
    0.75
}
fn default_beta() -> f64 {
    0.75
}
fn default_n_best() -> usize {
    5
}
fn default_coefficients() -> BTreeMap<String, f64> {
    AMSP_COMPONENTS.iter().map(|c| (c.to_string(), 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub strategy: Strategy,
    /// Weight of the structure term in LFS-LC-D.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// LCD decay for atoms/compounds already covered; `0 <= beta < 1`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_coefficients")]
    pub amsp_coefficients: BTreeMap<String, f64>,
    #[serde(default = "default_n_best")]
    pub n_best: usize,
    #[serde(default)]
    pub unit: UnitKind,
    /// Use the back-translation of the most likely target utterance in the
    /// max error variant instead of the source utterance itself.
    #[serde(default)]
    pub max_error_back_translated: bool,
    /// KDE bandwidth; the median pairwise distance when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl AcquisitionConfig {
    pub fn new(strategy: Strategy) -> Self {
        AcquisitionConfig {
            strategy,
            alpha: default_alpha(),
            beta: default_beta(),
            amsp_coefficients: default_coefficients(),
            n_best: default_n_best(),
            unit: UnitKind::Both,
            max_error_back_translated: false,
            bandwidth: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(AcquisitionError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(AcquisitionError::Config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.n_best == 0 {
            return Err(AcquisitionError::Config("n_best must be at least 1".into()));
        }
        for (name, &c) in &self.amsp_coefficients {
            if !AMSP_COMPONENTS.contains(&name.as_str()) {
                return Err(AcquisitionError::UnknownComponent(name.clone()));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(AcquisitionError::Config(format!("coefficient {name} must be >= 0")));
            }
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(AcquisitionError::Config(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// A picked example with the scores it had when it was picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub id: String,
    pub per_component: BTreeMap<String, f64>,
    pub aggregate: f64,
}

/// Top `k` ids by score (ties to the smaller id); `-inf` is never picked.
pub fn select_batch(scores: &ScoreVector, k: usize) -> Result<Vec<String>> {
    let mut finite: Vec<(&str, f64)> = scores.iter().filter(|(_, s)| s.is_finite()).collect();
    if finite.len() < k {
        return Err(AcquisitionError::InsufficientCandidates {
            needed: k,
            available: finite.len(),
        });
    }
    finite.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(finite.into_iter().take(k).map(|(id, _)| id.to_string()).collect())
}

// ---------------------------------------------------------------------------
// LF structure diversity

/// Incremental k-means over TF-IDF LF vectors, with translated examples as
/// frozen centroids. Scores are `-‖f(y) - c‖²` for examples in new clusters
/// and `-inf` for examples in the cluster of any selected example.
#[derive(Debug, Clone)]
pub struct LfsdModel {
    pub clustering: Clustering,
    base: BTreeMap<String, f64>,
    cluster: HashMap<String, usize>,
    excluded: BTreeSet<usize>,
}

impl LfsdModel {
    pub fn fit(untranslated: &[Point], translated: &[Point], k_new: usize, seed: u64) -> Result<Self> {
        if k_new == 0 {
            return Err(AcquisitionError::ZeroBudget);
        }
        let mut points: Vec<Point> = untranslated.to_vec();
        points.extend(translated.iter().cloned());
        let fixed: Vec<SparseVector> = translated.iter().map(|p| p.vector.clone()).collect();
        let clustering = clustering::incremental_kmeans(
            &points,
            &fixed,
            k_new,
            seed,
            clustering::DEFAULT_MAX_ITER,
            clustering::DEFAULT_TOL,
        )?;
        let map = clustering.assignment_map();
        let mut base = BTreeMap::new();
        let mut cluster = HashMap::new();
        for p in untranslated {
            let c = map[p.id.as_str()];
            base.insert(p.id.clone(), -p.vector.sq_distance(&clustering.centroids[c]));
            cluster.insert(p.id.clone(), c);
        }
        // A translated example is the centroid of its own frozen cluster.
        let excluded = (0..clustering.fixed_count).collect();
        Ok(LfsdModel {
            clustering,
            base,
            cluster,
            excluded,
        })
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.cluster.get(id).copied()
    }

    /// Scores for `candidates` given the examples picked so far this batch.
    pub fn scores<'a>(&self, candidates: impl IntoIterator<Item = &'a str>, picked: &[String]) -> ScoreVector {
        let mut excluded = self.excluded.clone();
        excluded.extend(picked.iter().filter_map(|id| self.cluster_of(id)));
        candidates
            .into_iter()
            .map(|id| {
                let c = self.cluster[id];
                let s = if excluded.contains(&c) { f64::NEG_INFINITY } else { self.base[id] };
                (id, s)
            })
            .collect()
    }
}

pub fn lfsd_scores(untranslated: &[Point], translated: &[Point], k_new: usize, seed: u64) -> Result<ScoreVector> {
    let model = LfsdModel::fit(untranslated, translated, k_new, seed)?;
    Ok(model.scores(untranslated.iter().map(|p| p.id.as_str()), &[]))
}

/// TF-IDF points for `examples` under `model`.
pub fn lf_points(model: &TfidfModel, examples: &[&Example]) -> Result<Vec<Point>> {
    examples
        .iter()
        .map(|e| Ok(Point::new(e.id.clone(), model.featurize(e)?)))
        .collect()
}

// ---------------------------------------------------------------------------
// Lexical choice diversity

/// Distinct atoms/compounds of an LF.
pub fn unit_set(example: &Example, unit: UnitKind) -> Result<BTreeSet<String>> {
    let tree = lf::parse_lf(&example.lf)?;
    Ok(lf::extract_units(&tree, unit).into_iter().collect())
}

pub fn covered_units<'a>(examples: impl IntoIterator<Item = &'a Example>, unit: UnitKind) -> Result<HashSet<String>> {
    let mut out = HashSet::new();
    for e in examples {
        out.extend(unit_set(e, unit)?);
    }
    Ok(out)
}

/// Mean over the example's distinct units of `λ_a · H(p(· | a))`, where
/// `λ_a = 1` for a unit not yet covered by selected examples and `beta`
/// otherwise.
pub fn lcd_score(units: &BTreeSet<String>, cooc: &CooccurrenceModel, covered: &HashSet<String>, beta: f64) -> f64 {
    let total: f64 = units
        .iter()
        .map(|a| {
            let lambda = if covered.contains(a) { beta } else { 1.0 };
            lambda * cooc.entropy(a)
        })
        .sum();
    total / units.len() as f64
}

pub fn lcd_scores(
    candidates: &[&Example],
    cooc: &CooccurrenceModel,
    covered: &HashSet<String>,
    beta: f64,
) -> Result<ScoreVector> {
    let mut out = ScoreVector::new();
    for e in candidates {
        let units = unit_set(e, cooc.unit())?;
        if units.is_empty() {
            return Err(AcquisitionError::EmptyUnits(e.id.clone()));
        }
        out.insert(e.id.clone(), lcd_score(&units, cooc, covered, beta));
    }
    Ok(out)
}

/// `alpha · q(lfsd) + q(lcd)` with `q` the joint quantile normalization;
/// `-inf` structure scores stay `-inf`.
pub fn lfs_lc_d(lfsd: &ScoreVector, lcd: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    if !lfsd.same_ids(lcd) {
        return Err(AcquisitionError::MismatchedIds);
    }
    let norm = numerics::quantile_normalize(&[lfsd.clone(), lcd.clone()])?;
    Ok(norm[0]
        .iter()
        .map(|(id, s)| {
            let c = norm[1].get(id).expect("same ids");
            let v = if s == f64::NEG_INFINITY || c == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                alpha * s + c
            };
            (id, v)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Translation bias and error

/// NBEST: `-H(n-best(P(·|y)))`; MAX: `ln max P(x_t|y)`. Both lie in
/// `(-inf, 0]`, larger meaning a more skewed (biased) distribution.
pub fn bias_scores(
    dist: &TargetDistribution,
    candidates: &[&Example],
    variant: Variant,
    n_best: usize,
) -> Result<ScoreVector> {
    let mut out = ScoreVector::new();
    for e in candidates {
        let s = match variant {
            Variant::Nbest => {
                let probs: Vec<f64> = dist.nbest(&e.lf, n_best)?.into_iter().map(|(_, p)| p).collect();
                -numerics::entropy(&probs)?
            }
            Variant::Max => dist.max_probability(&e.lf)?.ln(),
        };
        out.insert(e.id.clone(), s);
    }
    Ok(out)
}

/// Expected parser surprise on back-translations.
///
/// NBEST: `-Σ_{x_t ∈ n-best} P(x_t|y) · ln P_θ(y | back(x_t))`.
/// MAX: `-ln P_θ(y | x_s)`, or with `back_translated`, the same on the
/// back-translation of the most likely target utterance.
#[allow(clippy::too_many_arguments)]
pub fn error_scores(
    dist: &TargetDistribution,
    back: &dyn MachineTranslator,
    parser: &dyn ParserAdapter,
    candidates: &[&Example],
    source_lang: &str,
    variant: Variant,
    n_best: usize,
    back_translated: bool,
) -> Result<ScoreVector> {
    let mut cache: HashMap<String, String> = HashMap::new();
    let mut back_of = |utt: &str| -> Result<String> {
        if let Some(b) = cache.get(utt) {
            return Ok(b.clone());
        }
        let b = back.backward(utt)?;
        cache.insert(utt.to_string(), b.clone());
        Ok(b)
    };
    let mut out = ScoreVector::new();
    for e in candidates {
        let s = match variant {
            Variant::Nbest => {
                let mut acc = 0.0;
                for (xt, p) in dist.nbest(&e.lf, n_best)? {
                    let bt = back_of(&xt)?;
                    acc -= p * parser.score(&bt, &e.lf)?;
                }
                acc
            }
            Variant::Max if back_translated => {
                let (xt, _) = dist.nbest(&e.lf, 1)?.remove(0);
                -parser.score(&back_of(&xt)?, &e.lf)?
            }
            Variant::Max => {
                let xs = e.utterance(source_lang).unwrap_or_default();
                -parser.score(xs, &e.lf)?
            }
        };
        out.insert(e.id.clone(), s.max(0.0));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Semantic density and diversity

/// Log-density of each embedding under a KDE over all of them.
pub fn density_scores(embeddings: &[Point], bandwidth: f64) -> Result<ScoreVector> {
    let data: Vec<SparseVector> = embeddings.iter().map(|p| p.vector.clone()).collect();
    embeddings
        .iter()
        .map(|p| Ok((p.id.clone(), numerics::kde_log_density(&data, &p.vector, bandwidth)?)))
        .collect()
}

/// `0` for candidates whose cluster holds no selected example, `-inf`
/// otherwise. A selected example that is a frozen centroid belongs to its
/// own frozen cluster.
pub fn semdiv_scores<'a>(
    clustering: &Clustering,
    candidates: impl IntoIterator<Item = &'a str>,
    picked: &[String],
    accumulated_budget: usize,
) -> Result<ScoreVector> {
    if clustering.k() < accumulated_budget {
        return Err(AcquisitionError::TooFewClusters {
            clusters: clustering.k(),
            budget: accumulated_budget,
        });
    }
    let map = clustering.assignment_map();
    let mut taken: BTreeSet<usize> = (0..clustering.fixed_count).collect();
    taken.extend(picked.iter().filter_map(|id| map.get(id.as_str()).copied()));
    Ok(candidates
        .into_iter()
        .map(|id| {
            let s = match map.get(id) {
                Some(c) if !taken.contains(c) => 0.0,
                _ => f64::NEG_INFINITY,
            };
            (id, s)
        })
        .collect())
}

/// `Σ_k α_k · q(φ_k)`, with `q` the joint quantile normalization of the
/// components. Any `-inf` component makes the aggregate `-inf`. Components
/// without a coefficient get weight 1.
pub fn amsp_aggregate(
    components: &BTreeMap<String, ScoreVector>,
    coefficients: &BTreeMap<String, f64>,
) -> Result<ScoreVector> {
    for name in components.keys().chain(coefficients.keys()) {
        if !AMSP_COMPONENTS.contains(&name.as_str()) {
            return Err(AcquisitionError::UnknownComponent(name.clone()));
        }
    }
    let names: Vec<&String> = components.keys().collect();
    let vectors: Vec<ScoreVector> = components.values().cloned().collect();
    let Some(first) = vectors.first() else {
        return Ok(ScoreVector::new());
    };
    if vectors.iter().any(|v| !v.same_ids(first)) {
        return Err(AcquisitionError::MismatchedIds);
    }
    let normalized = if vectors.len() >= 2 {
        numerics::quantile_normalize(&vectors)?
    } else {
        vectors.clone()
    };
    Ok(first
        .ids()
        .map(|id| {
            let mut total = 0.0;
            for (name, (raw, norm)) in names.iter().zip(vectors.iter().zip(&normalized)) {
                if raw.get(id) == Some(f64::NEG_INFINITY) {
                    return (id, f64::NEG_INFINITY);
                }
                let alpha = coefficients.get(*name).copied().unwrap_or(1.0);
                total += alpha * norm.get(id).expect("same ids");
            }
            (id, total)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Baselines

/// Seeded uniform scores in `[0, 1)`, drawn in ascending id order.
pub fn random_scores<'a>(ids: impl IntoIterator<Item = &'a str>, seed: u64) -> ScoreVector {
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.into_iter().map(|id| (id, rng.random::<f64>())).collect()
}

/// Least confidence first: `-ln P_θ(y | x_s)`.
pub fn s2s_fw_scores(parser: &dyn ParserAdapter, candidates: &[&Example], source_lang: &str) -> Result<ScoreVector> {
    candidates
        .iter()
        .map(|e| {
            let xs = e.utterance(source_lang).unwrap_or_default();
            Ok((e.id.clone(), -parser.score(xs, &e.lf)?))
        })
        .collect()
}

/// Number of the example's distinct atom/compound types not yet covered.
pub fn max_compound_scores(candidates: &[&Example], covered: &HashSet<String>, unit: UnitKind) -> Result<ScoreVector> {
    candidates
        .iter()
        .map(|e| {
            let fresh = unit_set(e, unit)?.iter().filter(|u| !covered.contains(*u)).count();
            Ok((e.id.clone(), fresh as f64))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Batch selection driver

/// Everything a strategy may need for one round. Optional members are only
/// required by the strategies that use them.
pub struct SelectionContext<'a> {
    /// Untranslated candidates.
    pub candidates: Vec<&'a Example>,
    /// Examples translated in earlier rounds, in selection order.
    pub translated: Vec<&'a Example>,
    pub source_lang: &'a str,
    pub round: usize,
    pub parser: Option<&'a dyn ParserAdapter>,
    pub target_distribution: Option<&'a TargetDistribution>,
    pub translator: Option<&'a dyn MachineTranslator>,
    pub embedder: &'a dyn UtteranceEmbedder,
}

/// A selected batch plus the round models that produced it.
#[derive(Debug, Clone)]
pub struct Selection {
    pub picks: Vec<ScoredExample>,
    pub lfsd_clustering: Option<Clustering>,
    pub semdiv_clustering: Option<Clustering>,
}

impl Selection {
    pub fn ids(&self) -> Vec<String> {
        self.picks.iter().map(|p| p.id.clone()).collect()
    }
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Selects `k` examples from `ctx.candidates` under `config`.
pub fn select(config: &AcquisitionConfig, ctx: &SelectionContext<'_>, k: usize) -> Result<Selection> {
    config.validate()?;
    if k == 0 {
        return Err(AcquisitionError::ZeroBudget);
    }
    if ctx.candidates.len() < k {
        return Err(AcquisitionError::InsufficientCandidates {
            needed: k,
            available: ctx.candidates.len(),
        });
    }
    let seed = round_seed(config.seed, ctx.round);
    let strategy = config.strategy;
    let need = |what: &'static str| AcquisitionError::MissingContext { strategy, what };

    let mut lfsd_clustering = None;
    let mut semdiv_clustering = None;

    // Round models, fitted once before the batch is built.
    let lfsd = if matches!(strategy, Strategy::Lfsd | Strategy::LfsLcD) {
        let all: Vec<&Example> = ctx.candidates.iter().chain(&ctx.translated).copied().collect();
        let tfidf = TfidfModel::fit(&all.iter().map(|e| (*e).clone()).collect::<Vec<_>>())?;
        let model = LfsdModel::fit(
            &lf_points(&tfidf, &ctx.candidates)?,
            &lf_points(&tfidf, &ctx.translated)?,
            k,
            seed,
        )?;
        lfsd_clustering = Some(model.clustering.clone());
        Some(model)
    } else {
        None
    };

    let cooc = if matches!(strategy, Strategy::Lcd | Strategy::LfsLcD) {
        let all: Vec<Example> = ctx.candidates.iter().chain(&ctx.translated).map(|e| (*e).clone()).collect();
        let corpus = crate::corpus::Corpus::new(all, ctx.source_lang, "")
            .map_err(|e| AcquisitionError::Config(e.to_string()))?;
        Some(CooccurrenceModel::fit(&corpus, ctx.source_lang, config.unit)?)
    } else {
        None
    };

    let candidate_units: HashMap<&str, BTreeSet<String>> =
        if matches!(strategy, Strategy::Lcd | Strategy::LfsLcD | Strategy::MaxCompound) {
            ctx.candidates
                .iter()
                .map(|e| Ok((e.id.as_str(), unit_set(e, config.unit)?)))
                .collect::<Result<_>>()?
        } else {
            HashMap::new()
        };
    if let Some((id, _)) = candidate_units.iter().find(|(_, u)| u.is_empty()) {
        return Err(AcquisitionError::EmptyUnits(id.to_string()));
    }

    let mut statics: BTreeMap<String, ScoreVector> = BTreeMap::new();
    if strategy.is_amsp() {
        let dist = ctx.target_distribution.ok_or_else(|| need("a target distribution"))?;
        let parser = ctx.parser.ok_or_else(|| need("a trained parser"))?;
        let mt = ctx.translator.ok_or_else(|| need("a machine translator"))?;
        let variant = strategy.variant();
        statics.insert(BIAS.into(), bias_scores(dist, &ctx.candidates, variant, config.n_best)?);
        statics.insert(
            ERROR.into(),
            error_scores(
                dist,
                mt,
                parser,
                &ctx.candidates,
                ctx.source_lang,
                variant,
                config.n_best,
                config.max_error_back_translated,
            )?,
        );
        let embed = |e: &&Example| -> Result<Point> {
            let text = e.utterance(ctx.source_lang).unwrap_or_default();
            Ok(Point::new(e.id.clone(), ctx.embedder.embed(&e.id, text)?))
        };
        let cand_points: Vec<Point> = ctx.candidates.iter().map(embed).collect::<Result<_>>()?;
        let bandwidth = config.bandwidth.unwrap_or_else(|| {
            let data: Vec<SparseVector> = cand_points.iter().map(|p| p.vector.clone()).collect();
            numerics::median_pairwise_bandwidth(&data, 256, seed)
        });
        statics.insert(DENSITY.into(), density_scores(&cand_points, bandwidth)?);

        let trans_points: Vec<Point> = ctx.translated.iter().map(embed).collect::<Result<_>>()?;
        let mut points = cand_points;
        points.extend(trans_points.iter().cloned());
        let fixed: Vec<SparseVector> = trans_points.into_iter().map(|p| p.vector).collect();
        semdiv_clustering = Some(clustering::incremental_kmeans(
            &points,
            &fixed,
            k,
            seed,
            clustering::DEFAULT_MAX_ITER,
            clustering::DEFAULT_TOL,
        )?);
    } else if strategy == Strategy::Random {
        statics.insert(
            "random".into(),
            random_scores(ctx.candidates.iter().map(|e| e.id.as_str()), seed),
        );
    } else if strategy == Strategy::S2sFw {
        let parser = ctx.parser.ok_or_else(|| need("a trained parser"))?;
        statics.insert("confidence".into(), s2s_fw_scores(parser, &ctx.candidates, ctx.source_lang)?);
    }

    let translated_units = covered_units(ctx.translated.iter().copied(), config.unit)?;
    let accumulated = ctx.translated.len() + k;

    let mut picks: Vec<ScoredExample> = Vec::with_capacity(k);
    let mut picked: Vec<String> = Vec::with_capacity(k);
    let mut covered = translated_units;

    for _ in 0..k {
        let picked_set: HashSet<&str> = picked.iter().map(String::as_str).collect();
        let remaining: Vec<&Example> = ctx
            .candidates
            .iter()
            .copied()
            .filter(|e| !picked_set.contains(e.id.as_str()))
            .collect();
        let remaining_ids = || remaining.iter().map(|e| e.id.as_str());
        let restrict = |v: &ScoreVector| -> ScoreVector {
            remaining_ids().map(|id| (id, v.get(id).expect("static score"))).collect()
        };

        let mut components: BTreeMap<String, ScoreVector> = BTreeMap::new();
        let aggregate = match strategy {
            Strategy::Lfsd => {
                let s = lfsd.as_ref().unwrap().scores(remaining_ids(), &picked);
                components.insert("lfsd".into(), s.clone());
                s
            }
            Strategy::Lcd => {
                let s = lcd_from_units(&remaining, &candidate_units, cooc.as_ref().unwrap(), &covered, config.beta);
                components.insert("lcd".into(), s.clone());
                s
            }
            Strategy::LfsLcD => {
                let s = lfsd.as_ref().unwrap().scores(remaining_ids(), &picked);
                let c = lcd_from_units(&remaining, &candidate_units, cooc.as_ref().unwrap(), &covered, config.beta);
                let agg = lfs_lc_d(&s, &c, config.alpha)?;
                components.insert("lfsd".into(), s);
                components.insert("lcd".into(), c);
                agg
            }
            Strategy::AmspNbest | Strategy::AmspMax => {
                for (name, v) in &statics {
                    components.insert(name.clone(), restrict(v));
                }
                components.insert(
                    DIVERSITY.into(),
                    semdiv_scores(semdiv_clustering.as_ref().unwrap(), remaining_ids(), &picked, accumulated)?,
                );
                let weighted: BTreeMap<String, ScoreVector> = components
                    .iter()
                    .filter(|(name, _)| config.amsp_coefficients.get(*name).copied().unwrap_or(1.0) > 0.0)
                    .map(|(n, v)| (n.clone(), v.clone()))
                    .collect();
                amsp_aggregate(&weighted, &config.amsp_coefficients)?
            }
            Strategy::Random | Strategy::S2sFw => {
                let (name, v) = statics.iter().next().unwrap();
                let s = restrict(v);
                components.insert(name.clone(), s.clone());
                s
            }
            Strategy::MaxCompound => {
                let s: ScoreVector = remaining
                    .iter()
                    .map(|e| {
                        let fresh = candidate_units[e.id.as_str()].iter().filter(|u| !covered.contains(*u)).count();
                        (e.id.as_str(), fresh as f64)
                    })
                    .collect();
                components.insert("new_units".into(), s.clone());
                s
            }
        };

        let best = select_batch(&aggregate, 1).map_err(|e| match e {
            AcquisitionError::InsufficientCandidates { .. } => AcquisitionError::InsufficientCandidates {
                needed: k,
                available: picked.len(),
            },
            other => other,
        })?;
        let id = best.into_iter().next().expect("one pick");
        if let Some(units) = candidate_units.get(id.as_str()) {
            covered.extend(units.iter().cloned());
        }
        picks.push(ScoredExample {
            per_component: components
                .iter()
                .map(|(n, v)| (n.clone(), v.get(&id).expect("scored")))
                .collect(),
            aggregate: aggregate.get(&id).expect("scored"),
            id: id.clone(),
        });
        picked.push(id);
    }

    Ok(Selection {
        picks,
        lfsd_clustering,
        semdiv_clustering,
    })
}

fn lcd_from_units(
    remaining: &[&Example],
    units: &HashMap<&str, BTreeSet<String>>,
    cooc: &CooccurrenceModel,
    covered: &HashSet<String>,
    beta: f64,
) -> ScoreVector {
    remaining
        .iter()
        .map(|e| (e.id.as_str(), lcd_score(&units[e.id.as_str()], cooc, covered, beta)))
        .collect()
}
