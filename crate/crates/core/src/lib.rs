//! Active learning for collecting translated semantic-parsing data.
//!
//! Given a source-language corpus of utterance/LF pairs, pick which examples
//! to send to human translators so that a parser trained on the result works
//! well in the target language.

pub mod acquisition;
pub mod campaign;
pub mod clustering;
pub mod corpus;
pub mod features;
pub mod lf;
pub mod numerics;
pub mod parser;
pub mod service;
pub mod sparse;
pub mod synthetic;
pub mod translation;
pub mod tuning;

#[cfg(test)]
mod testutil;
