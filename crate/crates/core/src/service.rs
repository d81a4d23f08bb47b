//! HTTP service through which human translators supply each round's
//! translations.
//!
//! Every session owns a campaign running on its own thread. The campaign's
//! oracle publishes the round's batch and blocks until all of it has been
//! submitted. Submissions and round results are appended to a per-session
//! journal; on restart the journal is replayed through a fresh campaign,
//! which reaches the same state because campaigns are deterministic.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::campaign::{budget_sizes, Campaign, CampaignConfig, MetricsRecord, OracleKind};
use crate::corpus::Example;
use crate::translation::{BatchItem, TranslationError, TranslationOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingTranslations,
    Training,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.into(),
            message: message.into(),
            status: status.as_u16(),
        }
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum JournalEntry {
    Created { session_id: String, config: CampaignConfig },
    Submitted { round: usize, translations: BTreeMap<String, String> },
    Round { record: MetricsRecord },
}

struct Journal {
    file: Option<File>,
    skip_rounds: usize,
}

impl Journal {
    fn append(&mut self, entry: &JournalEntry) -> std::io::Result<()> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_string(entry).expect("journal entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    fn round(&mut self, record: &MetricsRecord) -> std::io::Result<()> {
        if self.skip_rounds > 0 {
            self.skip_rounds -= 1;
            return Ok(());
        }
        self.append(&JournalEntry::Round { record: record.clone() })
    }
}

struct Inner {
    status: SessionStatus,
    round: usize,
    batch: Vec<BatchItem>,
    submitted: BTreeMap<String, String>,
    metrics: Vec<MetricsRecord>,
    translated: Vec<Example>,
    error: Option<String>,
    journal: Journal,
}

struct Shared {
    inner: Mutex<Inner>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// The blocking oracle: publishes the batch and waits for submissions.
struct HumanSession {
    shared: Arc<Shared>,
    replay: HashMap<usize, BTreeMap<String, String>>,
}

impl TranslationOracle for HumanSession {
    fn translate(&mut self, round: usize, batch: &[BatchItem]) -> Result<BTreeMap<String, String>, TranslationError> {
        let mut inner = self.shared.lock();
        inner.round = round;
        inner.batch = batch.to_vec();
        inner.submitted = BTreeMap::new();
        if let Some(prior) = self.replay.remove(&round) {
            for (id, text) in prior {
                if !batch.iter().any(|b| b.id == id) {
                    return Err(TranslationError::Session(format!(
                        "journal holds a translation for {id:?}, which is not in round {round}'s batch"
                    )));
                }
                inner.submitted.insert(id, text);
            }
        }
        if inner.submitted.len() < batch.len() {
            inner.status = SessionStatus::AwaitingTranslations;
            self.shared.changed.notify_all();
            while inner.submitted.len() < batch.len() {
                inner = self.shared.changed.wait(inner).unwrap_or_else(|p| p.into_inner());
            }
        }
        inner.status = SessionStatus::Training;
        self.shared.changed.notify_all();
        Ok(inner.submitted.clone())
    }
}

pub struct Session {
    pub id: String,
    pub budgets: Vec<usize>,
    shared: Arc<Shared>,
}

/// Snapshot returned by the status endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub session_id: String,
    pub status: SessionStatus,
    pub round: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub submitted: usize,
    pub pending: usize,
    pub metrics: Vec<MetricsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub session_id: String,
    pub status: SessionStatus,
    pub round: usize,
    pub batch_size: usize,
    pub items: Vec<BatchItem>,
}

impl Session {
    fn view(&self) -> StatusView {
        let inner = self.shared.lock();
        let active = inner.status != SessionStatus::Finished;
        StatusView {
            session_id: self.id.clone(),
            status: inner.status,
            round: inner.round,
            rounds: self.budgets.len(),
            batch_size: if active { inner.batch.len() } else { 0 },
            submitted: if active { inner.submitted.len() } else { 0 },
            pending: if inner.status == SessionStatus::AwaitingTranslations {
                inner.batch.len() - inner.submitted.len()
            } else {
                0
            },
            metrics: inner.metrics.clone(),
            error: inner.error.clone(),
        }
    }

    fn batch(&self) -> BatchView {
        let inner = self.shared.lock();
        let items = if inner.status == SessionStatus::AwaitingTranslations {
            inner
                .batch
                .iter()
                .filter(|b| !inner.submitted.contains_key(&b.id))
                .cloned()
                .collect()
        } else {
            Vec::new()
        };
        BatchView {
            session_id: self.id.clone(),
            status: inner.status,
            round: inner.round,
            batch_size: if inner.status == SessionStatus::Finished { 0 } else { inner.batch.len() },
            items,
        }
    }

    /// Validates the whole submission before recording any of it.
    fn submit(&self, translations: BTreeMap<String, String>) -> ApiResult<StatusView> {
        {
            let mut inner = self.shared.lock();
            if inner.status != SessionStatus::AwaitingTranslations {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "not_accepting",
                    format!("session is {:?}, not awaiting translations", inner.status),
                ));
            }
            if translations.is_empty() {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_submission", "no translations given"));
            }
            for (id, text) in &translations {
                if !inner.batch.iter().any(|b| &b.id == id) {
                    return Err(ApiError::new(
                        StatusCode::BAD_REQUEST,
                        "unknown_id",
                        format!("{id:?} is not in the current batch"),
                    ));
                }
                if text.trim().is_empty() {
                    return Err(ApiError::new(
                        StatusCode::BAD_REQUEST,
                        "empty_translation",
                        format!("translation for {id:?} is empty"),
                    ));
                }
                if inner.submitted.contains_key(id) {
                    return Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "duplicate_submission",
                        format!("{id:?} was already translated"),
                    ));
                }
            }
            let round = inner.round;
            inner
                .journal
                .append(&JournalEntry::Submitted {
                    round,
                    translations: translations.clone(),
                })
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string()))?;
            inner.submitted.extend(translations);
            if inner.submitted.len() == inner.batch.len() {
                inner.status = SessionStatus::Training;
            }
            self.shared.changed.notify_all();
        }
        Ok(self.view())
    }

    /// Blocks until the session stops training.
    pub fn wait_until_settled(&self) -> SessionStatus {
        let mut inner = self.shared.lock();
        while inner.status == SessionStatus::Training {
            inner = self.shared.changed.wait(inner).unwrap_or_else(|p| p.into_inner());
        }
        inner.status
    }

    /// Examples translated so far, as used for retraining.
    pub fn translated(&self) -> Vec<Example> {
        self.shared.lock().translated.clone()
    }

    pub fn status(&self) -> StatusView {
        self.view()
    }
}

fn publish(shared: &Shared, campaign: &Campaign) {
    let mut inner = shared.lock();
    let record = campaign.state().metrics.last().expect("at least one record").clone();
    if let Err(e) = inner.journal.round(&record) {
        log::warn!("journal write failed: {e}");
    }
    inner.metrics = campaign.state().metrics.clone();
    inner.translated = campaign.state().translated.clone();
    inner.round = campaign.state().round;
    if campaign.is_finished() {
        inner.status = SessionStatus::Finished;
        inner.batch.clear();
        inner.submitted.clear();
    }
    shared.changed.notify_all();
}

fn fail(shared: &Shared, message: String) {
    let mut inner = shared.lock();
    log::error!("session failed: {message}");
    inner.status = SessionStatus::Failed;
    inner.error = Some(message);
    shared.changed.notify_all();
}

fn drive(shared: Arc<Shared>, mut campaign: Campaign) {
    if let Err(e) = campaign.start() {
        return fail(&shared, e.to_string());
    }
    publish(&shared, &campaign);
    while !campaign.is_finished() {
        if let Err(e) = campaign.run_round() {
            return fail(&shared, e.to_string());
        }
        publish(&shared, &campaign);
    }
}

struct Registry {
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
    next_id: AtomicUsize,
    journal_dir: Option<PathBuf>,
    base_dir: PathBuf,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    registry: Arc<Registry>,
}

impl AppState {
    /// Relative corpus paths in submitted configs resolve against `base_dir`.
    /// With a journal directory, sessions persist across restarts.
    pub fn new(base_dir: impl Into<PathBuf>, journal_dir: Option<PathBuf>) -> Self {
        AppState {
            registry: Arc::new(Registry {
                sessions: Mutex::new(BTreeMap::new()),
                next_id: AtomicUsize::new(1),
                journal_dir,
                base_dir: base_dir.into(),
            }),
        }
    }

    /// Replays every journal in the journal directory.
    pub fn restore(base_dir: impl Into<PathBuf>, journal_dir: PathBuf) -> std::io::Result<Self> {
        let state = AppState::new(base_dir, Some(journal_dir.clone()));
        fs::create_dir_all(&journal_dir)?;
        let mut paths: Vec<PathBuf> = fs::read_dir(&journal_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let entries = read_journal(&path)?;
            let Some(JournalEntry::Created { session_id, config }) = entries.first().cloned() else {
                log::warn!("skipping {}: no creation record", path.display());
                continue;
            };
            let mut replay: HashMap<usize, BTreeMap<String, String>> = HashMap::new();
            let mut rounds = 0;
            for e in &entries[1..] {
                match e {
                    JournalEntry::Submitted { round, translations } => {
                        replay.entry(*round).or_default().extend(translations.clone());
                    }
                    JournalEntry::Round { .. } => rounds += 1,
                    JournalEntry::Created { .. } => {}
                }
            }
            if let Some(n) = session_id.strip_prefix("session-").and_then(|n| n.parse::<usize>().ok()) {
                state.registry.next_id.fetch_max(n + 1, Ordering::SeqCst);
            }
            let file = OpenOptions::new().append(true).open(&path)?;
            let journal = Journal {
                file: Some(file),
                skip_rounds: rounds,
            };
            if let Err(e) = state.launch(session_id.clone(), config, journal, replay) {
                log::error!("cannot restore {session_id}: {}", e.message);
            }
        }
        Ok(state)
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.registry
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}")))
    }

    /// Starts a campaign and waits until it reaches its first barrier.
    pub fn create_session(&self, mut config: CampaignConfig) -> ApiResult<Arc<Session>> {
        if config.oracle != OracleKind::HumanSession {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_config",
                "sessions need oracle = \"human_session\"",
            ));
        }
        config.resolve_paths(&self.registry.base_dir);
        config
            .validate()
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
        let id = format!("session-{}", self.registry.next_id.fetch_add(1, Ordering::SeqCst));
        let file = match &self.registry.journal_dir {
            Some(dir) => {
                let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string());
                fs::create_dir_all(dir).map_err(io)?;
                Some(File::create(dir.join(format!("{id}.jsonl"))).map_err(io)?)
            }
            None => None,
        };
        let mut journal = Journal { file, skip_rounds: 0 };
        journal
            .append(&JournalEntry::Created {
                session_id: id.clone(),
                config: config.clone(),
            })
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "journal", e.to_string()))?;
        let session = self.launch(id, config, journal, HashMap::new())?;
        session.wait_until_settled();
        Ok(session)
    }

    fn launch(
        &self,
        id: String,
        config: CampaignConfig,
        journal: Journal,
        replay: HashMap<usize, BTreeMap<String, String>>,
    ) -> ApiResult<Arc<Session>> {
        let invalid = |e: crate::campaign::CampaignError| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string());
        let (pool, test) = config.load_corpora().map_err(invalid)?;
        let budgets = if config.budget_percents.is_empty() {
            Vec::new()
        } else {
            budget_sizes(pool.len(), &config.budget_percents).map_err(invalid)?
        };
        let shared = Arc::new(Shared {
            inner: Mutex::new(Inner {
                status: SessionStatus::Training,
                round: 0,
                batch: Vec::new(),
                submitted: BTreeMap::new(),
                metrics: Vec::new(),
                translated: Vec::new(),
                error: None,
                journal,
            }),
            changed: Condvar::new(),
        });
        let oracle = HumanSession {
            shared: Arc::clone(&shared),
            replay,
        };
        let campaign = Campaign::with_oracle(config, pool, test, Box::new(oracle)).map_err(invalid)?;
        let session = Arc::new(Session {
            id: id.clone(),
            budgets,
            shared: Arc::clone(&shared),
        });
        self.registry
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::clone(&session));
        std::thread::Builder::new()
            .name(id)
            .spawn(move || drive(shared, campaign))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "spawn", e.to_string()))?;
        Ok(session)
    }
}

fn read_journal(path: &Path) -> std::io::Result<Vec<JournalEntry>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => out.push(e),
            // A torn final line from a crash mid-write.
            Err(e) => log::warn!("{}: ignoring unreadable journal line: {e}", path.display()),
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    translations: BTreeMap<String, String>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &str, code: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string()))
}

async fn create(State(state): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<Value>)> {
    let config: CampaignConfig = parse_body(&body, "invalid_config")?;
    let session = tokio::task::spawn_blocking(move || state.create_session(config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let view = session.view();
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "session_id": session.id,
            "batch_size": session.budgets.first().copied().unwrap_or(0),
            "status": view.status,
        })),
    ))
}

async fn batch(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<BatchView>> {
    Ok(Json(state.session(&id)?.batch()))
}

async fn submit(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> ApiResult<Json<StatusView>> {
    let session = state.session(&id)?;
    let submission: Submission = parse_body(&body, "invalid_body")?;
    Ok(Json(session.submit(submission.translations)?))
}

async fn status(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StatusView>> {
    Ok(Json(state.session(&id)?.view()))
}

async fn metrics(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<MetricsRecord>>> {
    Ok(Json(state.session(&id)?.view().metrics))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/batch", get(batch))
        .route("/sessions/{id}/translations", post(submit))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/metrics", get(metrics))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::Strategy;
    use crate::corpus;
    use crate::testutil::toy4_bilingual;

    fn config(dir: &Path) -> CampaignConfig {
        let pool = dir.join("pool.jsonl");
        corpus::save_corpus(&toy4_bilingual(), &pool).unwrap();
        let mut c = CampaignConfig::new(pool.clone(), Strategy::Random);
        c.test_corpus = Some(pool);
        c.budget_percents = vec![50.0, 100.0];
        c.oracle = OracleKind::HumanSession;
        c
    }

    fn answer(session: &Session) -> BTreeMap<String, String> {
        session
            .batch()
            .items
            .iter()
            .map(|b| (b.id.clone(), format!("übersetzt: {}", b.source)))
            .collect()
    }

    #[test]
    fn round_trip_through_two_rounds() {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::new(dir.path(), None);
        let s = state.create_session(config(dir.path())).unwrap();
        assert_eq!(s.batch().items.len(), 2);
        assert_eq!(s.view().status, SessionStatus::AwaitingTranslations);

        let all = answer(&s);
        let first: BTreeMap<String, String> = all.iter().take(1).map(|(k, v)| (k.clone(), v.clone())).collect();
        s.submit(first.clone()).unwrap();
        assert_eq!(s.batch().items.len(), 1);
        let dup = s.submit(first).unwrap_err();
        assert_eq!(dup.code, "duplicate_submission");

        let rest: BTreeMap<String, String> = all.iter().skip(1).map(|(k, v)| (k.clone(), v.clone())).collect();
        s.submit(rest).unwrap();
        assert_eq!(s.wait_until_settled(), SessionStatus::AwaitingTranslations);
        assert_eq!(s.view().metrics.len(), 2);
        for e in s.translated() {
            assert_eq!(e.utterance("de"), all.get(&e.id).map(String::as_str));
        }

        s.submit(answer(&s)).unwrap();
        assert_eq!(s.wait_until_settled(), SessionStatus::Finished);
        assert_eq!(s.view().metrics.len(), 3);
        assert!(s.batch().items.is_empty());
    }

    #[test]
    fn rejects_bad_submissions_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::new(dir.path(), None);
        let s = state.create_session(config(dir.path())).unwrap();
        let mut sub = answer(&s);
        sub.insert("E9".into(), "x".into());
        assert_eq!(s.submit(sub).unwrap_err().code, "unknown_id");
        assert_eq!(s.view().submitted, 0);
        let mut sub = answer(&s);
        let first = sub.keys().next().unwrap().clone();
        sub.insert(first, "  ".into());
        assert_eq!(s.submit(sub).unwrap_err().code, "empty_translation");
        assert_eq!(s.view().submitted, 0);
        assert_eq!(state.session("nope").err().unwrap().code, "not_found");
    }

    #[test]
    fn journal_replays_after_restart() {
        let dir = tempfile::tempdir().unwrap();
        let journals = dir.path().join("journal");
        let state = AppState::new(dir.path(), Some(journals.clone()));
        let s = state.create_session(config(dir.path())).unwrap();
        let answers = answer(&s);
        let (k, v) = answers.iter().next().unwrap();
        s.submit(BTreeMap::from([(k.clone(), v.clone())])).unwrap();
        let rest: BTreeMap<String, String> = answers.iter().skip(1).map(|(k, v)| (k.clone(), v.clone())).collect();
        s.submit(rest).unwrap();
        s.wait_until_settled();
        let partial = answer(&s);
        let (k2, v2) = partial.iter().next().unwrap();
        s.submit(BTreeMap::from([(k2.clone(), v2.clone())])).unwrap();
        let before = s.view();

        let restored = AppState::restore(dir.path(), journals.clone()).unwrap();
        let r = restored.session(&s.id).unwrap();
        assert_eq!(r.wait_until_settled(), SessionStatus::AwaitingTranslations);
        assert_eq!(r.view(), before);
        assert_eq!(r.translated(), s.translated());
        let lines = fs::read_to_string(journals.join(format!("{}.jsonl", s.id))).unwrap();
        assert_eq!(lines.lines().filter(|l| l.contains("\"round\":{")).count(), 0);
        assert_eq!(lines.lines().filter(|l| l.contains("\"event\":\"round\"")).count(), 2);
        let next = restored.create_session(config(dir.path())).unwrap();
        assert_ne!(next.id, s.id);
    }

    #[test]
    fn refuses_non_human_oracles() {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::new(dir.path(), None);
        let mut c = config(dir.path());
        c.oracle = OracleKind::GoldReveal;
        assert_eq!(state.create_session(c).err().unwrap().code, "invalid_config");
    }
}
