//! Semantic parser adapters.
//!
//! The engine only needs four things from a parser: train on a pool of
//! utterance/LF pairs, predict an LF, score an (utterance, LF) pair as a
//! log-probability, and report exact-match accuracy. [`SurrogateParser`] is
//! a nearest-neighbour stand-in; [`ProcessParser`] drives any external
//! parser speaking the line-delimited JSON protocol:
//!
//! ```text
//! -> {"cmd":"train","corpus":"/tmp/train.jsonl"}
//! <- {"ok":true,"result":null}
//! -> {"cmd":"predict","utterance":"which states border texas"}
//! <- {"ok":true,"result":"( lambda $0 e ... )"}
//! -> {"cmd":"score","utterance":"...","lf":"..."}
//! <- {"ok":true,"result":-0.13}
//! -> {"cmd":"evaluate","corpus":"/tmp/test.jsonl"}
//! <- {"ok":false,"error":"parser is not trained"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{self, Example};
use crate::features::{embed_utterance, FeatureError};
use crate::lf;
use crate::sparse::SparseVector;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("cannot train on an empty corpus")]
    EmptyTraining,
    #[error("parser is not trained")]
    NotTrained,
    #[error("{predictions} predictions for {golds} gold LFs")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error("adapter process: {0}")]
    Process(String),
    #[error("adapter protocol: {0}")]
    Protocol(String),
    #[error("adapter reported: {0}")]
    Remote(String),
}

/// The parser contract used by campaigns and tuning.
pub trait ParserAdapter: Send {
    /// Replaces any previous model with one trained on every (utterance, LF)
    /// pair in `data`, across all languages present.
    fn train(&mut self, data: &[Example]) -> Result<(), ParserError>;

    fn predict(&self, utterance: &str) -> Result<String, ParserError>;

    /// Log-probability of `lf` given `utterance`; always `<= 0`.
    fn score(&self, utterance: &str, lf: &str) -> Result<f64, ParserError>;

    /// Exact-match accuracy over every (utterance, LF) pair in `test`.
    fn evaluate(&self, test: &[Example]) -> Result<f64, ParserError> {
        let mut predictions = Vec::new();
        let mut golds = Vec::new();
        for ex in test {
            for utt in ex.utterances.values() {
                predictions.push(self.predict(utt)?);
                golds.push(ex.lf.clone());
            }
        }
        exact_match_accuracy(&predictions, &golds)
    }
}

impl<P: ParserAdapter + ?Sized> ParserAdapter for Box<P> {
    fn train(&mut self, data: &[Example]) -> Result<(), ParserError> {
        (**self).train(data)
    }
    fn predict(&self, utterance: &str) -> Result<String, ParserError> {
        (**self).predict(utterance)
    }
    fn score(&self, utterance: &str, lf: &str) -> Result<f64, ParserError> {
        (**self).score(utterance, lf)
    }
    fn evaluate(&self, test: &[Example]) -> Result<f64, ParserError> {
        (**self).evaluate(test)
    }
}

/// Fraction of pairs whose whitespace-normalized LF tokens are identical.
pub fn exact_match_accuracy<P: AsRef<str>, G: AsRef<str>>(
    predictions: &[P],
    golds: &[G],
) -> Result<f64, ParserError> {
    if predictions.len() != golds.len() {
        return Err(ParserError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(ParserError::EmptyEvaluation);
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| lf::tokenize(p.as_ref()) == lf::tokenize(g.as_ref()))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

pub const SCORE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Memorized {
    id: String,
    lang: String,
    lf: String,
    vector: SparseVector,
}

/// Nearest-neighbour parser over hashed trigram embeddings.
///
/// `predict` returns the LF of the most cosine-similar training utterance
/// (ties to the smaller id). `score(x, y)` is
/// `(ln(s + ε) - ln(1 + ε)) / temperature`, where `s` is the best
/// similarity between `x` and a training utterance labelled `y`.
#[derive(Debug, Clone)]
pub struct SurrogateParser {
    pairs: Vec<Memorized>,
    temperature: f64,
}

impl Default for SurrogateParser {
    fn default() -> Self {
        SurrogateParser {
            pairs: Vec::new(),
            temperature: 1.0,
        }
    }
}

impl SurrogateParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_temperature(temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        SurrogateParser {
            pairs: Vec::new(),
            temperature,
        }
    }

    pub fn trained(data: &[Example]) -> Result<Self, ParserError> {
        let mut p = Self::new();
        p.train(data)?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn nearest(&self, query: &SparseVector) -> Option<(&Memorized, f64)> {
        let mut best: Option<(&Memorized, f64)> = None;
        for m in &self.pairs {
            let sim = query.dot(&m.vector);
            best = match best {
                Some((b, s)) if s > sim || (s == sim && (&b.id, &b.lang) <= (&m.id, &m.lang)) => {
                    Some((b, s))
                }
                _ => Some((m, sim)),
            };
        }
        best
    }
}

impl ParserAdapter for SurrogateParser {
    fn train(&mut self, data: &[Example]) -> Result<(), ParserError> {
        let mut pairs = Vec::new();
        for ex in data {
            let lf = lf::normalize(&ex.lf);
            for (lang, utt) in &ex.utterances {
                pairs.push(Memorized {
                    id: ex.id.clone(),
                    lang: lang.clone(),
                    lf: lf.clone(),
                    vector: embed_utterance(utt)?,
                });
            }
        }
        if pairs.is_empty() {
            return Err(ParserError::EmptyTraining);
        }
        self.pairs = pairs;
        Ok(())
    }

    fn predict(&self, utterance: &str) -> Result<String, ParserError> {
        let q = embed_utterance(utterance)?;
        self.nearest(&q)
            .map(|(m, _)| m.lf.clone())
            .ok_or(ParserError::NotTrained)
    }

    fn score(&self, utterance: &str, lf: &str) -> Result<f64, ParserError> {
        if self.pairs.is_empty() {
            return Err(ParserError::NotTrained);
        }
        let q = embed_utterance(utterance)?;
        let target = lf::normalize(lf);
        let best = self
            .pairs
            .iter()
            .filter(|m| m.lf == target)
            .map(|m| q.dot(&m.vector))
            .fold(0.0f64, f64::max);
        let raw = ((best + SCORE_EPSILON).ln() - (1.0 + SCORE_EPSILON).ln()) / self.temperature;
        Ok(raw.min(0.0))
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Train { corpus: String },
    Predict { utterance: String },
    Score { utterance: String, lf: String },
    Evaluate { corpus: String },
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn success(result: Value) -> Self {
        Response {
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        Response {
            ok: false,
            result: None,
            error: Some(message.into()),
        }
    }
}

fn read_corpus_file(path: &str) -> Result<Vec<Example>, ParserError> {
    Ok(corpus::read_examples(Path::new(path))?
        .into_iter()
        .map(|(_, e)| e)
        .collect())
}

/// Handles one protocol request against `adapter`.
pub fn handle_request(adapter: &mut dyn ParserAdapter, request: Request) -> Response {
    let result = match request {
        Request::Train { corpus } => read_corpus_file(&corpus)
            .and_then(|data| adapter.train(&data))
            .map(|()| Value::Null),
        Request::Predict { utterance } => adapter.predict(&utterance).map(Value::String),
        Request::Score { utterance, lf } => adapter.score(&utterance, &lf).map(Value::from),
        Request::Evaluate { corpus } => read_corpus_file(&corpus)
            .and_then(|data| adapter.evaluate(&data))
            .map(Value::from),
    };
    match result {
        Ok(v) => Response::success(v),
        Err(e) => Response::failure(e.to_string()),
    }
}

/// Serves the adapter protocol until `input` reaches end of file. Malformed
/// request lines are answered with an error response.
pub fn serve_adapter(
    adapter: &mut dyn ParserAdapter,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handle_request(adapter, req),
            Err(e) => Response::failure(format!("bad request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A parser living in a child process. Requests are serialized: one
/// outstanding request per child at a time.
pub struct ProcessParser {
    channel: Mutex<Channel>,
}

impl ProcessParser {
    pub fn spawn(program: impl AsRef<std::ffi::OsStr>, args: &[String]) -> Result<Self, ParserError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ParserError::Process(e.to_string()))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        Ok(ProcessParser {
            channel: Mutex::new(Channel {
                child,
                stdin,
                stdout,
            }),
        })
    }

    fn request(&self, request: &Request) -> Result<Value, ParserError> {
        let mut ch = self.channel.lock().expect("adapter channel poisoned");
        let mut line = serde_json::to_string(request).expect("requests serialize");
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|()| ch.stdin.flush())
            .map_err(|e| ParserError::Process(e.to_string()))?;
        let mut reply = String::new();
        let n = ch
            .stdout
            .read_line(&mut reply)
            .map_err(|e| ParserError::Process(e.to_string()))?;
        if n == 0 {
            return Err(ParserError::Process("adapter closed its output".into()));
        }
        let response: Response =
            serde_json::from_str(&reply).map_err(|e| ParserError::Protocol(e.to_string()))?;
        if response.ok {
            Ok(response.result.unwrap_or(Value::Null))
        } else {
            Err(ParserError::Remote(
                response.error.unwrap_or_else(|| "unspecified error".into()),
            ))
        }
    }

    fn with_corpus_file(
        &self,
        data: &[Example],
        make: impl FnOnce(String) -> Request,
    ) -> Result<Value, ParserError> {
        let file = tempfile::Builder::new()
            .suffix(".jsonl")
            .tempfile()
            .map_err(|e| ParserError::Process(e.to_string()))?;
        corpus::write_examples(data, file.path())?;
        self.request(&make(file.path().display().to_string()))
    }
}

impl ParserAdapter for ProcessParser {
    fn train(&mut self, data: &[Example]) -> Result<(), ParserError> {
        self.with_corpus_file(data, |corpus| Request::Train { corpus })
            .map(|_| ())
    }

    fn predict(&self, utterance: &str) -> Result<String, ParserError> {
        match self.request(&Request::Predict {
            utterance: utterance.to_string(),
        })? {
            Value::String(s) => Ok(s),
            other => Err(ParserError::Protocol(format!("expected an LF string, got {other}"))),
        }
    }

    fn score(&self, utterance: &str, lf: &str) -> Result<f64, ParserError> {
        let v = self.request(&Request::Score {
            utterance: utterance.to_string(),
            lf: lf.to_string(),
        })?;
        v.as_f64()
            .ok_or_else(|| ParserError::Protocol(format!("expected a number, got {v}")))
    }

    fn evaluate(&self, test: &[Example]) -> Result<f64, ParserError> {
        let v = self.with_corpus_file(test, |corpus| Request::Evaluate { corpus })?;
        v.as_f64()
            .ok_or_else(|| ParserError::Protocol(format!("expected a number, got {v}")))
    }
}

impl Drop for ProcessParser {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}
