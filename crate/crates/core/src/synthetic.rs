//! Seeded bilingual toy corpus for simulations.
//!
//! Thirty LF templates (ten query shapes over three result types), each
//! with three English paraphrases and a single state-name slot. Target
//! utterances are a deterministic word-by-word pseudo-translation that
//! keeps entity names, and the same word map is emitted as an MT lexicon.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{self, Corpus, CorpusError, Example};

const SHAPES: [(&str, [&str; 3]); 10] = [
    (
        "( answer ( {T}:t ( loc {X} ) ) )",
        ["what {N} are in {X}", "which {N} lie in {X}", "list the {N} in {X}"],
    ),
    (
        "( count ( {T}:t ( loc {X} ) ) )",
        ["how many {N} are in {X}", "count the {N} in {X}", "give the number of {N} in {X}"],
    ),
    (
        "( largest ( {T}:t ( loc {X} ) ) )",
        ["what is the largest {S} in {X}", "which {S} in {X} is biggest", "name the biggest {S} in {X}"],
    ),
    (
        "( smallest ( {T}:t ( loc {X} ) ) )",
        ["what is the smallest {S} in {X}", "which {S} in {X} is tiniest", "name the least {S} in {X}"],
    ),
    (
        "( answer ( {T}:t ( next_to {X} ) ) )",
        ["which {N} border {X}", "what {N} are next to {X}", "list {N} neighboring {X}"],
    ),
    (
        "( count ( {T}:t ( next_to {X} ) ) )",
        ["how many {N} border {X}", "count {N} next to {X}", "number of {N} adjacent to {X}"],
    ),
    (
        "( answer ( population ( {T}:t ( loc {X} ) ) ) )",
        [
            "what is the population of the {N} in {X}",
            "how many people live in the {N} of {X}",
            "give the population of {N} in {X}",
        ],
    ),
    (
        "( answer ( area ( {T}:t ( loc {X} ) ) ) )",
        ["what is the area of the {N} in {X}", "how big are the {N} in {X}", "give the size of {N} in {X}"],
    ),
    (
        "( answer ( exclude ( {T}:t all ) ( loc {X} ) ) )",
        ["which {N} are not in {X}", "what {N} lie outside {X}", "list {N} outside of {X}"],
    ),
    (
        "( most ( {T}:t ( traverse {X} ) ) )",
        [
            "which {S} crosses {X} the most",
            "what {S} runs through {X} most",
            "name the {S} traversing {X} most often",
        ],
    ),
];

/// (label, plural noun, singular noun)
const TYPES: [(&str, &str, &str); 3] = [("state", "states", "state"), ("city", "cities", "city"), ("river", "rivers", "river")];

const STATES: [&str; 15] = [
    "texas", "ohio", "utah", "iowa", "maine", "idaho", "nevada", "oregon", "kansas", "alaska", "georgia",
    "montana", "vermont", "virginia", "florida",
];

const FILLERS: [&str; 3] = ["please tell me", "i want to know", "can you say"];

pub const TEMPLATE_COUNT: usize = SHAPES.len() * TYPES.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub pool_size: usize,
    pub test_size: usize,
    /// Distinct entities drawn for each template.
    pub entities_per_template: usize,
    pub source_lang: String,
    pub target_lang: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            pool_size: 600,
            test_size: 150,
            entities_per_template: 7,
            source_lang: "en".into(),
            target_lang: "de".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pool: Corpus,
    pub test: Corpus,
    /// Source word to target word.
    pub lexicon: Vec<(String, String)>,
}

struct Template {
    lf: String,
    paraphrases: Vec<String>,
    entities: Vec<&'static str>,
}

/// Word-level pseudo-translation: reversed letters plus a suffix.
/// Entity names pass through.
pub fn pseudo_translate_word(word: &str) -> String {
    if STATES.contains(&word) {
        return word.to_string();
    }
    let reversed: String = word.chars().rev().collect();
    format!("{reversed}en")
}

pub fn pseudo_translate(text: &str) -> String {
    text.split_whitespace().map(pseudo_translate_word).collect::<Vec<_>>().join(" ")
}

fn templates(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Template> {
    let mut out = Vec::with_capacity(TEMPLATE_COUNT);
    for (shape, paraphrases) in SHAPES {
        for (label, plural, singular) in TYPES {
            let fill = |s: &str| s.replace("{T}", label).replace("{N}", plural).replace("{S}", singular);
            let mut entities: Vec<&'static str> = STATES.to_vec();
            entities.shuffle(rng);
            entities.truncate(spec.entities_per_template.clamp(1, STATES.len()));
            out.push(Template {
                lf: fill(shape),
                paraphrases: paraphrases.iter().map(|p| fill(p)).collect(),
                entities,
            });
        }
    }
    out
}

fn example(id: String, spec: &SyntheticSpec, t: &Template, entity: &str, paraphrase: usize, prefix: &str) -> Example {
    let mut source = t.paraphrases[paraphrase].replace("{X}", entity);
    if !prefix.is_empty() {
        source = format!("{prefix} {source}");
    }
    let target = pseudo_translate(&source);
    Example::new(id, t.lf.replace("{X}", entity))
        .with_utterance(spec.source_lang.clone(), source)
        .with_utterance(spec.target_lang.clone(), target)
}

/// Pool examples are spread as evenly as possible over templates, each
/// template cycling through its (entity, paraphrase) combinations in a
/// seeded order. Test utterances carry a filler prefix so they never
/// coincide with pool utterances.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let templates = templates(spec, &mut rng);

    let mut pool = Vec::with_capacity(spec.pool_size);
    let per_template: Vec<usize> = (0..TEMPLATE_COUNT)
        .map(|t| spec.pool_size / TEMPLATE_COUNT + usize::from(t < spec.pool_size % TEMPLATE_COUNT))
        .collect();
    for (t, tpl) in templates.iter().enumerate() {
        let mut combos: Vec<(usize, usize)> = (0..tpl.entities.len())
            .flat_map(|e| (0..3).map(move |p| (e, p)))
            .collect();
        combos.shuffle(&mut rng);
        for n in 0..per_template[t] {
            let (e, p) = combos[n % combos.len()];
            let lap = n / combos.len();
            let prefix = if lap == 0 { "" } else { FILLERS[(lap - 1) % FILLERS.len()] };
            pool.push(example(format!("s{t:02}-{n:02}"), spec, tpl, tpl.entities[e], p, prefix));
        }
    }

    let mut test = Vec::with_capacity(spec.test_size);
    for n in 0..spec.test_size {
        let t = n % TEMPLATE_COUNT;
        let tpl = &templates[t];
        let entity = *tpl.entities.choose(&mut rng).expect("entities");
        let p = (n / TEMPLATE_COUNT + t) % 3;
        let prefix = FILLERS.choose(&mut rng).expect("fillers");
        test.push(example(format!("t{n:03}"), spec, tpl, entity, p, prefix));
    }

    let mut words: Vec<String> = pool
        .iter()
        .chain(&test)
        .flat_map(|e| {
            e.utterance(&spec.source_lang)
                .unwrap_or_default()
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .filter(|w| !STATES.contains(&w.as_str()))
        .collect();
    words.sort();
    words.dedup();
    let lexicon = words.into_iter().map(|w| (pseudo_translate_word(&w), w)).map(|(t, s)| (s, t)).collect();

    SyntheticCorpus {
        pool: Corpus::new(pool, spec.source_lang.clone(), spec.target_lang.clone()).expect("valid synthetic pool"),
        test: Corpus::new(test, spec.source_lang.clone(), spec.target_lang.clone()).expect("valid synthetic test"),
        lexicon,
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub pool: PathBuf,
    pub test: PathBuf,
    pub lexicon: PathBuf,
}

/// Writes `pool.jsonl`, `test.jsonl` and `lexicon.tsv` into `dir`.
pub fn write(corpus: &SyntheticCorpus, dir: &Path) -> Result<SyntheticFiles, CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let files = SyntheticFiles {
        pool: dir.join("pool.jsonl"),
        test: dir.join("test.jsonl"),
        lexicon: dir.join("lexicon.tsv"),
    };
    corpus::save_corpus(&corpus.pool, &files.pool)?;
    corpus::save_corpus(&corpus.test, &files.test)?;
    let body: String = corpus.lexicon.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    fs::write(&files.lexicon, body).map_err(|e: io::Error| CorpusError::Io {
        path: files.lexicon.display().to_string(),
        source: e,
    })?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn default_shape() {
        let c = generate(&SyntheticSpec::default());
        assert_eq!(c.pool.len(), 600);
        assert_eq!(c.test.len(), 150);
        let lfs: BTreeSet<&str> = c.pool.examples().iter().map(|e| e.lf.as_str()).collect();
        assert!(lfs.len() > 200, "{} distinct LFs", lfs.len());
        assert!(lfs.len() < 600);
        let shapes: BTreeSet<&str> = c.pool.examples().iter().map(|e| &e.id[..3]).collect();
        assert_eq!(shapes.len(), TEMPLATE_COUNT);
    }

    #[test]
    fn deterministic_and_seeded() {
        let a = generate(&SyntheticSpec::default());
        let b = generate(&SyntheticSpec::default());
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.test, b.test);
        let c = generate(&SyntheticSpec {
            seed: 1,
            ..SyntheticSpec::default()
        });
        assert_ne!(a.pool, c.pool);
    }

    #[test]
    fn translations_keep_entities() {
        assert_eq!(pseudo_translate("which states border texas"), "hcihwen setatsen redroben texas");
        let c = generate(&SyntheticSpec::default());
        let lex: std::collections::HashMap<&str, &str> =
            c.lexicon.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
        for e in c.pool.examples().iter().take(50) {
            let mapped: Vec<&str> = e
                .utterance("en")
                .unwrap()
                .split(' ')
                .map(|w| lex.get(w).copied().unwrap_or(w))
                .collect();
            assert_eq!(mapped.join(" "), e.utterance("de").unwrap());
        }
    }

    #[test]
    fn test_utterances_are_unseen() {
        let c = generate(&SyntheticSpec::default());
        let pool: BTreeSet<&str> = c.pool.examples().iter().map(|e| e.utterance("en").unwrap()).collect();
        assert!(c.test.examples().iter().all(|e| !pool.contains(e.utterance("en").unwrap())));
        let pool_lfs: BTreeSet<&str> = c.pool.examples().iter().map(|e| e.lf.as_str()).collect();
        let covered = c.test.examples().iter().filter(|e| pool_lfs.contains(e.lf.as_str())).count();
        assert_eq!(covered, c.test.len());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&SyntheticSpec {
            pool_size: 60,
            test_size: 10,
            ..SyntheticSpec::default()
        });
        let f = write(&c, dir.path()).unwrap();
        let back = corpus::load_corpus(&f.pool, "en", "de").unwrap();
        assert_eq!(back, c.pool);
        assert!(fs::read_to_string(&f.lexicon).unwrap().lines().count() > 10);
    }
}
