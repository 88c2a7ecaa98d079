//! Chat-model baseline: a fixed, versioned prompt sent to an
//! OpenAI-compatible endpoint, with retries, a token budget and a record of
//! every exchange.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::language::Language;
use crate::model::tokenizer;

pub const PROMPT_TEMPLATE_VERSION: &str = "v1";
pub const PROMPT_TEMPLATE: &str = "Summarize the following radiology findings in {language}: {findings}";

pub fn prompt_for(findings: &str, language: Language) -> String {
    PROMPT_TEMPLATE.replace("{language}", language.display_name()).replace("{findings}", findings)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("provider unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("spend cap of {cap} tokens reached ({spent} used)")]
    BudgetExceeded { spent: u64, cap: u64 },
    #[error("provider rejected the request: {0}")]
    Rejected(String),
}

impl ProviderError {
    pub fn class(&self) -> &'static str {
        match self {
            ProviderError::Transient(_) | ProviderError::Unavailable { .. } => "ProviderUnavailable",
            ProviderError::BudgetExceeded { .. } => "BudgetExceeded",
            ProviderError::Rejected(_) => "ProviderRejected",
        }
    }
}

/// One request/response exchange with a chat model.
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, prompt: &str) -> Result<Completion, ProviderError>;
}

/// Client for `POST {base_url}/chat/completions`.
pub struct OpenAiCompatible {
    agent: ureq::Agent,
    pub base_url: String,
    pub model: String,
    api_key: Option<String>,
}

impl OpenAiCompatible {
    /// `api_key` should come from the environment, never from a config file.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        OpenAiCompatible { agent, base_url: base_url.trim_end_matches('/').into(), model: model.into(), api_key }
    }
}

impl ChatProvider for OpenAiCompatible {
    fn name(&self) -> String {
        format!("{}@{}", self.model, self.base_url)
    }

    fn complete(&self, prompt: &str) -> Result<Completion, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Rejected(format!("HTTP {status}: {text}")));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| ProviderError::Transient(e.to_string()))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderError::Rejected("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = &v["usage"];
        Ok(Completion {
            prompt_tokens: usage["prompt_tokens"].as_u64().unwrap_or_else(|| tokenizer::count(prompt) as u64),
            completion_tokens: usage["completion_tokens"].as_u64().unwrap_or_else(|| tokenizer::count(&text) as u64),
            text,
        })
    }
}

/// Returns the findings part of the prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoProvider;

impl ChatProvider for EchoProvider {
    fn name(&self) -> String {
        "echo".into()
    }

    fn complete(&self, prompt: &str) -> Result<Completion, ProviderError> {
        let text = prompt.split_once(": ").map_or(prompt, |(_, rest)| rest).to_string();
        Ok(Completion {
            prompt_tokens: tokenizer::count(prompt) as u64,
            completion_tokens: tokenizer::count(&text) as u64,
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub provider: String,
    pub template_version: String,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub attempts: u32,
}

/// Wraps a provider with retries, a token spend cap and bounded
/// concurrency.
pub struct BaselineClient {
    provider: Box<dyn ChatProvider>,
    pub max_retries: u32,
    pub backoff: Duration,
    pub spend_cap_tokens: Option<u64>,
    pub max_concurrency: usize,
    spent: Mutex<u64>,
}

impl BaselineClient {
    pub fn new(provider: Box<dyn ChatProvider>) -> Self {
        BaselineClient {
            provider,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            spend_cap_tokens: None,
            max_concurrency: 2,
            spent: Mutex::new(0),
        }
    }

    pub fn spent_tokens(&self) -> u64 {
        *self.spent.lock().expect("spend counter")
    }

    fn check_budget(&self) -> Result<(), ProviderError> {
        match self.spend_cap_tokens {
            Some(cap) if self.spent_tokens() >= cap => Err(ProviderError::BudgetExceeded { spent: self.spent_tokens(), cap }),
            _ => Ok(()),
        }
    }

    pub fn summarize(&self, findings: &str, language: Language) -> Result<BaselineRecord, ProviderError> {
        self.check_budget()?;
        let prompt = prompt_for(findings, language);
        let started = Instant::now();
        let mut attempts = 0;
        let completion = loop {
            attempts += 1;
            match self.provider.complete(&prompt) {
                Ok(c) => break c,
                Err(ProviderError::Transient(msg)) if attempts > self.max_retries => {
                    return Err(ProviderError::Unavailable { attempts, last: msg });
                }
                Err(ProviderError::Transient(msg)) => {
                    log::warn!("baseline attempt {attempts} failed: {msg}");
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempts - 1));
                }
                Err(e) => return Err(e),
            }
        };
        *self.spent.lock().expect("spend counter") += completion.prompt_tokens + completion.completion_tokens;
        Ok(BaselineRecord {
            provider: self.provider.name(),
            template_version: PROMPT_TEMPLATE_VERSION.into(),
            prompt,
            response: completion.text,
            latency_ms: started.elapsed().as_millis() as u64,
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
            attempts,
        })
    }

    /// Order-preserving; at most `max_concurrency` requests in flight.
    pub fn summarize_many(&self, items: &[(String, Language)]) -> Vec<Result<BaselineRecord, ProviderError>> {
        let mut results: Vec<Option<Result<BaselineRecord, ProviderError>>> = vec![None; items.len()];
        let next = Mutex::new(0usize);
        let done = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..self.max_concurrency.max(1) {
                s.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("work index");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    let Some((findings, lang)) = items.get(i) else { break };
                    let r = self.summarize(findings, *lang);
                    done.lock().expect("results").push((i, r));
                });
            }
        });
        for (i, r) in done.into_inner().expect("results") {
            results[i] = Some(r);
        }
        results.into_iter().map(|r| r.expect("every item processed")).collect()
    }
}

/// Verbatim provider completion for `findings`.
pub fn baseline_summarize(client: &BaselineClient, findings: &str, language: Language) -> Result<String, ProviderError> {
    client.summarize(findings, language).map(|r| r.response)
}

/// One line of the model-versus-baseline comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub findings: String,
    pub original: String,
    pub baseline: String,
    pub model: String,
    pub findings_tokens: usize,
    pub original_tokens: usize,
    pub baseline_tokens: usize,
    pub model_tokens: usize,
}

impl ComparisonRow {
    pub fn baseline_not_shorter(&self) -> bool {
        self.baseline_tokens >= self.model_tokens
    }
}

/// Builds comparison rows from `(id, findings, original, baseline, model)`.
pub fn comparison_report<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a str, &'a str, &'a str, &'a str)>,
) -> Vec<ComparisonRow> {
    items
        .into_iter()
        .map(|(id, findings, original, baseline, model)| ComparisonRow {
            id: id.into(),
            findings_tokens: tokenizer::count(findings),
            original_tokens: tokenizer::count(original),
            baseline_tokens: tokenizer::count(baseline),
            model_tokens: tokenizer::count(model),
            findings: findings.into(),
            original: original.into(),
            baseline: baseline.into(),
            model: model.into(),
        })
        .collect()
}
