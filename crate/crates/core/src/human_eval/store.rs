use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{
    deblind, generate_for, pool_from_corpus, pool_from_predictions, sample_items, summarize_ratings, Blinding,
    EvalItem, EvalServiceError, EvalSession, ItemStatus, NextItem, RatingAck, RatingInput, RatingRecord,
    SessionSummary, DEFAULT_ITEMS,
};
use crate::corpus::{load_corpus, Corpus};
use crate::language::Language;
use crate::predictions::read_predictions;
use crate::summarize::{Checkpoint, DEFAULT_MAX_NEW_TOKENS};
use crate::workspace::{sanitize, write_atomic, WorkspaceConfig};

/// Body of a session-creation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    pub checkpoint: String,
    pub corpus: String,
    pub language: Language,
    #[serde(default = "default_items")]
    pub n_items: usize,
    #[serde(default)]
    pub seed: u64,
    /// Predictions file, relative to the workspace.
    #[serde(default)]
    pub predictions: Option<String>,
    /// Candidate items supplied inline.
    #[serde(default)]
    pub items: Option<Vec<EvalItem>>,
    #[serde(default = "default_mnt")]
    pub max_new_tokens: usize,
}

fn default_items() -> usize {
    DEFAULT_ITEMS
}

fn default_mnt() -> usize {
    DEFAULT_MAX_NEW_TOKENS
}

fn check_unique(pool: &[EvalItem]) -> Result<(), EvalServiceError> {
    let mut seen = HashSet::new();
    match pool.iter().find(|it| !seen.insert(it.item_id.as_str())) {
        Some(dup) => Err(EvalServiceError::BadRequest(format!("duplicate item id `{}`", dup.item_id))),
        None => Ok(()),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionCreated { session: EvalSession, items: Vec<EvalItem> },
    RatingSubmitted { session_id: String, record: RatingRecord },
}

struct SessionState {
    session: EvalSession,
    items: HashMap<String, EvalItem>,
    /// Latest record per item.
    current: BTreeMap<String, RatingRecord>,
    /// Every submission, in order.
    history: Vec<RatingRecord>,
}

#[derive(Serialize)]
struct Materialized<'a> {
    session: &'a EvalSession,
    ratings: Vec<&'a RatingRecord>,
}

impl SessionState {
    fn apply(&mut self, record: RatingRecord) {
        self.session.status.insert(record.item_id.clone(), ItemStatus::Rated);
        self.current.insert(record.item_id.clone(), record.clone());
        self.history.push(record);
    }

    fn ratings(&self) -> Vec<&RatingRecord> {
        self.session.items.iter().filter_map(|id| self.current.get(id)).collect()
    }
}

/// Session store and rating logic behind the HTTP API. Thread-safe.
pub struct EvalService {
    dir: PathBuf,
    log: Mutex<File>,
    sessions: RwLock<HashMap<String, Arc<RwLock<SessionState>>>>,
}

type Shared = Arc<RwLock<SessionState>>;

impl EvalService {
    /// Opens (or creates) the store in `dir`, replaying its event log.
    pub fn open(dir: &Path) -> Result<Self, EvalServiceError> {
        fs::create_dir_all(dir.join("sessions"))?;
        let log_path = dir.join("events.jsonl");
        let mut sessions: HashMap<String, SessionState> = HashMap::new();
        if log_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&log_path)?).lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = match serde_json::from_str(line) {
                    Ok(e) => e,
                    // An interrupted append leaves at most one torn final line.
                    Err(_) if i + 1 == last => break,
                    Err(e) => return Err(EvalServiceError::CorruptLog { line: i + 1, message: e.to_string() }),
                };
                match event {
                    Event::SessionCreated { session, items } => {
                        let items = items.into_iter().map(|it| (it.item_id.clone(), it)).collect();
                        sessions.insert(
                            session.session_id.clone(),
                            SessionState { session, items, current: BTreeMap::new(), history: Vec::new() },
                        );
                    }
                    Event::RatingSubmitted { session_id, record } => match sessions.get_mut(&session_id) {
                        Some(s) => s.apply(record),
                        None => {
                            return Err(EvalServiceError::CorruptLog {
                                line: i + 1,
                                message: format!("rating for unknown session {session_id}"),
                            })
                        }
                    },
                }
            }
        }
        let service = EvalService {
            dir: dir.to_path_buf(),
            log: Mutex::new(OpenOptions::new().create(true).append(true).open(&log_path)?),
            sessions: RwLock::new(HashMap::new()),
        };
        for (id, state) in sessions {
            service.materialize(&state)?;
            service.sessions.write().expect("sessions").insert(id, Arc::new(RwLock::new(state)));
        }
        Ok(service)
    }

    fn append(&self, event: &Event) -> Result<(), EvalServiceError> {
        let line = serde_json::to_string(event).expect("event serializes");
        let mut f = self.log.lock().expect("event log");
        writeln!(f, "{line}")?;
        f.sync_data()?;
        Ok(())
    }

    fn materialize(&self, state: &SessionState) -> Result<(), EvalServiceError> {
        let m = Materialized { session: &state.session, ratings: state.ratings() };
        let path = self.dir.join("sessions").join(format!("{}.json", sanitize(&state.session.session_id)));
        write_atomic(&path, &serde_json::to_vec_pretty(&m).expect("session serializes"))?;
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Shared, EvalServiceError> {
        self.sessions
            .read()
            .expect("sessions")
            .get(id)
            .cloned()
            .ok_or_else(|| EvalServiceError::UnknownSession(id.into()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Samples `n_items` of `pool` by `seed`, assigns blinding and persists
    /// the new session.
    pub fn create_session(
        &self,
        checkpoint: &str,
        corpus: &str,
        language: Language,
        pool: &[EvalItem],
        n_items: usize,
        seed: u64,
    ) -> Result<EvalSession, EvalServiceError> {
        check_unique(pool)?;
        let (items, blinding) = sample_items(pool, n_items, seed)?;
        self.insert(checkpoint, corpus, language, seed, items, blinding)
    }

    /// Like [`create_session`](Self::create_session) over the test split of
    /// `corpus`, generating summaries only for the sampled items.
    pub fn create_session_generating(
        &self,
        checkpoint: &Checkpoint,
        corpus: &Corpus,
        language: Language,
        n_items: usize,
        seed: u64,
        max_new_tokens: usize,
    ) -> Result<EvalSession, EvalServiceError> {
        let pool = pool_from_corpus(corpus, language);
        check_unique(&pool)?;
        let (mut items, blinding) = sample_items(&pool, n_items, seed)?;
        generate_for(checkpoint, language, &mut items, max_new_tokens)?;
        self.insert(&checkpoint.id, &corpus.descriptor().name, language, seed, items, blinding)
    }

    /// Resolves a request against a workspace: inline items, a predictions
    /// file, or generation with the named checkpoint.
    pub fn create_from_request(
        &self,
        req: &SessionRequest,
        workspace: Option<&WorkspaceConfig>,
    ) -> Result<EvalSession, EvalServiceError> {
        if let Some(items) = &req.items {
            return self.create_session(&req.checkpoint, &req.corpus, req.language, items, req.n_items, req.seed);
        }
        let ws = workspace.ok_or_else(|| {
            EvalServiceError::BadRequest("no workspace configured; supply `items` inline".into())
        })?;
        let corpus = load_corpus(&ws.corpus_path(&req.corpus)?)?;
        match &req.predictions {
            Some(path) => {
                let predictions = read_predictions(&ws.resolve(path)?)?;
                let pool = pool_from_predictions(&corpus, req.language, &predictions);
                self.create_session(&req.checkpoint, &req.corpus, req.language, &pool, req.n_items, req.seed)
            }
            None => {
                let ckpt = Checkpoint::load(ws, &req.checkpoint)?;
                self.create_session_generating(&ckpt, &corpus, req.language, req.n_items, req.seed, req.max_new_tokens)
            }
        }
    }

    fn insert(
        &self,
        checkpoint: &str,
        corpus: &str,
        language: Language,
        seed: u64,
        items: Vec<EvalItem>,
        blinding: Vec<Blinding>,
    ) -> Result<EvalSession, EvalServiceError> {
        let session = EvalSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            checkpoint: checkpoint.into(),
            corpus: corpus.into(),
            language,
            seed,
            items: items.iter().map(|it| it.item_id.clone()).collect(),
            blinding: items.iter().map(|it| it.item_id.clone()).zip(blinding).collect(),
            status: items.iter().map(|it| (it.item_id.clone(), ItemStatus::Pending)).collect(),
        };
        self.append(&Event::SessionCreated { session: session.clone(), items: items.clone() })?;
        let state = SessionState {
            session: session.clone(),
            items: items.into_iter().map(|it| (it.item_id.clone(), it)).collect(),
            current: BTreeMap::new(),
            history: Vec::new(),
        };
        self.materialize(&state)?;
        self.sessions.write().expect("sessions").insert(session.session_id.clone(), Arc::new(RwLock::new(state)));
        Ok(session)
    }

    /// Operator view of a session, including blinding.
    pub fn session(&self, id: &str) -> Result<EvalSession, EvalServiceError> {
        Ok(self.get(id)?.read().expect("session").session.clone())
    }

    pub fn next_item(&self, id: &str) -> Result<NextItem, EvalServiceError> {
        let shared = self.get(id)?;
        let state = shared.read().expect("session");
        let s = &state.session;
        let total = s.items.len();
        let Some((pos, item_id)) = s.items.iter().enumerate().find(|(_, i)| s.status[*i] == ItemStatus::Pending) else {
            return Ok(NextItem::Done { total });
        };
        let item = &state.items[item_id];
        let (first, second) = match s.blinding[item_id] {
            Blinding::GsFirst => (&item.generated, &item.reference),
            Blinding::RsFirst => (&item.reference, &item.generated),
        };
        Ok(NextItem::Item {
            item_id: item_id.clone(),
            position: pos + 1,
            total,
            findings: item.findings.clone(),
            summary_first: first.clone(),
            summary_second: second.clone(),
        })
    }

    /// Validates, de-blinds and persists one rating. Resubmitting an item
    /// replaces its current record; the log keeps every submission.
    pub fn submit_rating(&self, id: &str, input: &RatingInput) -> Result<RatingAck, EvalServiceError> {
        let shared = self.get(id)?;
        let mut state = shared.write().expect("session");
        let Some(&blinding) = state.session.blinding.get(&input.item_id) else {
            return Err(EvalServiceError::UnknownItem { session: id.into(), item: input.item_id.clone() });
        };
        let (readability, fcc, overall) = input.scores()?;
        let record = RatingRecord {
            item_id: input.item_id.clone(),
            positional: input.comparison,
            comparison: deblind(blinding, input.comparison),
            readability,
            fcc,
            overall,
            timestamp: Utc::now(),
        };
        let replaced = state.current.contains_key(&record.item_id);
        self.append(&Event::RatingSubmitted { session_id: id.into(), record: record.clone() })?;
        state.apply(record);
        self.materialize(&state)?;
        Ok(RatingAck {
            item_id: input.item_id.clone(),
            rated: state.current.len(),
            total: state.session.items.len(),
            replaced,
        })
    }

    pub fn aggregate_session(&self, id: &str) -> Result<SessionSummary, EvalServiceError> {
        let shared = self.get(id)?;
        let state = shared.read().expect("session");
        summarize_ratings(&state.session, &state.ratings())
    }

    /// Every submission for the session, oldest first.
    pub fn history(&self, id: &str) -> Result<Vec<RatingRecord>, EvalServiceError> {
        Ok(self.get(id)?.read().expect("session").history.clone())
    }

    /// Current ratings as CSV: `item_id, comparison_deblinded, r, fcc, oq,
    /// timestamp`, in session order.
    pub fn export_csv(&self, id: &str) -> Result<String, EvalServiceError> {
        let shared = self.get(id)?;
        let state = shared.read().expect("session");
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| EvalServiceError::Io(std::io::Error::other(e));
        w.write_record(["item_id", "comparison_deblinded", "r", "fcc", "oq", "timestamp"]).map_err(csv_err)?;
        for r in state.ratings() {
            w.write_record([
                r.item_id.clone(),
                r.comparison.to_string(),
                r.readability.to_string(),
                r.fcc.to_string(),
                r.overall.to_string(),
                r.timestamp.to_rfc3339(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalServiceError::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
