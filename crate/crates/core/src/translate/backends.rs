use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{BackendKind, TranslateError, Translator};
use crate::corpus::normalize_whitespace;
use crate::language::Language;
use crate::pipeline::Task;
use crate::rouge::split_sentences;
use crate::summarize::{Checkpoint, GenerationRequest};

/// Deterministic lookup of whole texts or single sentences for one
/// language pair.
#[derive(Debug, Clone)]
pub struct StaticTable {
    pub from: Language,
    pub to: Language,
    entries: HashMap<String, String>,
}

#[derive(Deserialize)]
struct TableLine {
    source: String,
    target: String,
}

impl StaticTable {
    pub fn new(from: Language, to: Language, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let entries = entries.into_iter().map(|(s, t)| (normalize_whitespace(&s), t)).collect();
        StaticTable { from, to, entries }
    }

    /// Reads JSON Lines `{source, target}`.
    pub fn load(path: &Path, from: Language, to: Language) -> Result<Self, TranslateError> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: TableLine = serde_json::from_str(&line).map_err(|e| TranslateError::Checkpoint {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((l.source, l.target));
        }
        Ok(Self::new(from, to, entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Translator for StaticTable {
    fn kind(&self) -> BackendKind {
        BackendKind::StaticTable
    }

    fn translate_chunk(&self, text: &str, from: Language, to: Language) -> Result<String, TranslateError> {
        let unsupported = |detail: String| TranslateError::UnsupportedPair { from, to, detail };
        if (from, to) != (self.from, self.to) {
            return Err(unsupported(format!("table covers {} -> {}", self.from, self.to)));
        }
        let key = normalize_whitespace(text);
        if let Some(t) = self.entries.get(&key) {
            return Ok(t.clone());
        }
        let mut out = Vec::new();
        for s in split_sentences(&key, from) {
            match self.entries.get(&s) {
                Some(t) => out.push(t.as_str()),
                None => return Err(unsupported(format!("no table entry for `{s}`"))),
            }
        }
        if out.is_empty() {
            return Err(unsupported(format!("no table entry for `{key}`")));
        }
        Ok(out.join(" "))
    }
}

/// LibreTranslate-style HTTP service: `POST {url}/translate` with
/// `{q, source, target, format}` answering `{translatedText}`.
pub struct ExternalService {
    agent: ureq::Agent,
    pub url: String,
    api_key: Option<String>,
    pub max_chars: usize,
    pub max_retries: u32,
    pub backoff: Duration,
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl ExternalService {
    pub fn new(url: &str, api_key: Option<String>, requests_per_second: f64, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        ExternalService {
            agent,
            url: url.trim_end_matches('/').into(),
            api_key,
            max_chars: 5000,
            max_retries: 5,
            backoff: Duration::from_millis(500),
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    /// Blocks until the rate limit admits one more request.
    fn wait_for_slot(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter");
            let now = Instant::now();
            let at = (*slot).max(now);
            *slot = at + self.min_interval;
            at - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attempt(&self, text: &str, from: Language, to: Language) -> Result<String, Attempt> {
        self.wait_for_slot();
        let mut body = json!({ "q": text, "source": from.code(), "target": to.code(), "format": "text" });
        if let Some(key) = &self.api_key {
            body["api_key"] = json!(key);
        }
        let mut resp = self
            .agent
            .post(format!("{}/translate", self.url))
            .send_json(&body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let v: Value = resp.body_mut().read_json().unwrap_or(Value::Null);
        let message = v["error"].as_str().unwrap_or("").to_string();
        match status {
            200..=299 => v["translatedText"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Attempt::Fatal(TranslateError::BackendUnavailable("response lacks translatedText".into()))),
            400 => Err(Attempt::Fatal(TranslateError::UnsupportedPair { from, to, detail: message })),
            401 | 403 => Err(Attempt::Fatal(TranslateError::BackendUnavailable(format!("HTTP {status}: {message}")))),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(TranslateError::BackendUnavailable(format!("HTTP {status}: {message}")))),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(TranslateError),
}

impl Translator for ExternalService {
    fn kind(&self) -> BackendKind {
        BackendKind::ExternalService
    }

    fn max_chars(&self) -> Option<usize> {
        Some(self.max_chars)
    }

    fn translate_chunk(&self, text: &str, from: Language, to: Language) -> Result<String, TranslateError> {
        let mut attempt = 0;
        loop {
            match self.attempt(text, from, to) {
                Ok(t) => return Ok(t),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) if attempt >= self.max_retries => {
                    return Err(TranslateError::BackendUnavailable(format!("{msg} after {} attempts", attempt + 1)));
                }
                Err(Attempt::Retry(msg)) => {
                    log::warn!("translation request failed ({msg}), retrying");
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// A fine-tuned translation checkpoint used through the generation path.
pub struct FineTunedModel {
    checkpoint: Checkpoint,
    pub max_new_tokens: usize,
}

impl FineTunedModel {
    pub fn new(checkpoint: Checkpoint) -> Self {
        let max_new_tokens = checkpoint.manifest.max_new_tokens.unwrap_or(1000);
        FineTunedModel { checkpoint, max_new_tokens }
    }
}

impl Translator for FineTunedModel {
    fn kind(&self) -> BackendKind {
        BackendKind::FineTunedModel
    }

    fn translate_chunk(&self, text: &str, from: Language, to: Language) -> Result<String, TranslateError> {
        let m = &self.checkpoint.manifest;
        let unsupported = |detail: String| TranslateError::UnsupportedPair { from, to, detail };
        if m.task != Some(Task::Translate) {
            return Err(unsupported(format!("checkpoint `{}` is not a translation model", self.checkpoint.id)));
        }
        if let Some(langs) = &m.language {
            if !(langs.contains(from) && langs.contains(to)) {
                return Err(unsupported(format!("checkpoint `{}` was trained on {langs}", self.checkpoint.id)));
            }
        }
        let req = GenerationRequest::new(text, from).with_max_new_tokens(self.max_new_tokens);
        self.checkpoint.summarize(&req).map_err(|e| TranslateError::BackendUnavailable(e.to_string()))
    }
}
