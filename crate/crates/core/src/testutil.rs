//! Shared fixtures for unit tests.

use crate::corpus::{Corpus, Example};

pub const FIG1: &str = "( lambda $0 e ( and ( state:t $0 ) ( next_to:t $0 s0 ) ) )";

pub const BORDER_TEXAS: &str = "( lambda $0 e ( and ( state:t $0 ) ( next_to:t $0 texas ) ) )";

/// Four examples: E1 and E2 are lexical variants of one LF, E3 and E4 have
/// a single phrasing each.
pub fn toy4() -> Corpus {
    let examples = vec![
        Example::new("E1", BORDER_TEXAS).with_utterance("en", "what states border texas"),
        Example::new("E2", BORDER_TEXAS).with_utterance("en", "which states neighbor texas"),
        Example::new("E3", "( lambda $0 e ( capital:t texas $0 ) )")
            .with_utterance("en", "what is the capital of texas"),
        Example::new("E4", "( lambda $0 e ( loc:t austin $0 ) )")
            .with_utterance("en", "where is austin"),
    ];
    Corpus::new(examples, "en", "de").unwrap()
}

/// [`toy4`] with German translations.
pub fn toy4_bilingual() -> Corpus {
    let de = [
        "welche staaten grenzen an texas",
        "welche staaten sind nachbarn von texas",
        "was ist die hauptstadt von texas",
        "wo ist austin",
    ];
    let examples = toy4()
        .examples()
        .iter()
        .zip(de)
        .map(|(e, t)| e.clone().with_utterance("de", t))
        .collect();
    Corpus::new(examples, "en", "de").unwrap()
}
