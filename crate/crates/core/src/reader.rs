//! Table QA readers: answer a question over the linearized view of a table
//! and report per-token log-probabilities.
//!
//! Every backend sees the table through [`linearize`], so context truncation
//! affects all of them the same way.

use std::path::PathBuf;
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cache::{content_key, CacheError, JsonlCache, Keyed};
use crate::http::{credential_from_env, JsonClient};
use crate::table::{linearize, LinearizedInput, Table};

/// Log-probability of a token the toy reader is sure about.
pub const CONFIDENT_LOGPROB: f64 = -0.1;
/// Log-probability of a guessed token.
pub const GUESS_LOGPROB: f64 = -2.0;

const LOGPROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderPrediction {
    pub answer_text: String,
    /// Natural-log probabilities, one per answer token.
    pub token_logprobs: Vec<f64>,
    pub truncated_input: bool,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BackendError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("no cached prediction for key {0}")]
    CacheMiss(String),
    #[error("malformed reader response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sequence log-probability of an empty token list")]
pub struct EmptyLogprobs;

/// Length-normalized sequence log-probability: the mean token logprob.
pub fn seq_log_prob(token_logprobs: &[f64]) -> Result<f64, EmptyLogprobs> {
    if token_logprobs.is_empty() {
        return Err(EmptyLogprobs);
    }
    Ok(token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64)
}

impl ReaderPrediction {
    pub fn seq_log_prob(&self) -> Result<f64, EmptyLogprobs> {
        seq_log_prob(&self.token_logprobs)
    }

    /// Checks the logprob list against the answer.
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.answer_text.trim().is_empty() && self.token_logprobs.is_empty() {
            return Err(BackendError::MalformedResponse(
                "non-empty answer without token logprobs".into(),
            ));
        }
        if let Some(bad) = self
            .token_logprobs
            .iter()
            .find(|lp| !lp.is_finite() || **lp > LOGPROB_TOLERANCE)
        {
            return Err(BackendError::MalformedResponse(format!(
                "token logprob {bad} is not a finite value <= 0"
            )));
        }
        Ok(())
    }
}

pub trait Reader: Send + Sync {
    fn backend(&self) -> &str;

    fn predict(
        &self,
        question: &str,
        table: &Table,
        budget_tokens: usize,
    ) -> Result<ReaderPrediction, BackendError>;
}

/// Replay-cache key: the question plus the exact linearized input.
pub fn prediction_key(question: &str, input: &LinearizedInput) -> String {
    content_key(&[question, &input.text])
}

static COUNT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(count rows|how many rows)\b").unwrap());
static LOOKUP_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?i)value of\s+(?P<target>.+?)\s+where\s+(?P<key>.+?)\s*(?:==|=|is)\s*['"]?(?P<value>.*?)['"]?\s*\??\s*$"#,
    )
    .unwrap()
});

/// Rule-based reader for offline experiments.
///
/// It answers two question shapes from the rows that survive truncation:
/// `count rows` / `how many rows` with the number of visible rows, and
/// `value of <col> where <col2> == '<val>'` by scanning visible rows. Answers
/// backed by a matching rule get [`CONFIDENT_LOGPROB`] per token, guesses get
/// [`GUESS_LOGPROB`].
#[derive(Debug, Clone, Default)]
pub struct ToyReader;

fn find_column(table: &Table, name: &str) -> Option<usize> {
    let name = name.trim();
    table.column_index(name).or_else(|| {
        table
            .columns()
            .iter()
            .rposition(|c| c.trim().eq_ignore_ascii_case(name))
    })
}

impl ToyReader {
    /// Answers from an explicit view; `truncated` marks a cut-off view.
    pub fn answer(&self, question: &str, view: &Table, truncated: bool) -> (String, bool) {
        if COUNT_RE.is_match(question) {
            return (view.num_rows().to_string(), !truncated);
        }
        if let Some(caps) = LOOKUP_RE.captures(question) {
            let target = find_column(view, &caps["target"]);
            let key = find_column(view, &caps["key"]);
            let wanted = caps["value"].trim().to_lowercase();
            if let (Some(target), Some(key)) = (target, key) {
                let hit = view
                    .rows()
                    .iter()
                    .find(|row| row[key].trim().to_lowercase() == wanted);
                if let Some(row) = hit {
                    return (row[target].clone(), true);
                }
            }
            return ("none".into(), false);
        }
        ("unknown".into(), false)
    }
}

impl Reader for ToyReader {
    fn backend(&self) -> &str {
        "toy"
    }

    fn predict(
        &self,
        question: &str,
        table: &Table,
        budget_tokens: usize,
    ) -> Result<ReaderPrediction, BackendError> {
        let input = linearize(question, table, budget_tokens);
        let view = table.head(input.rows_kept);
        let (answer, confident) = self.answer(question, &view, input.truncated);
        let per_token = if confident {
            CONFIDENT_LOGPROB
        } else {
            GUESS_LOGPROB
        };
        let tokens = answer.split_whitespace().count().max(1);
        Ok(ReaderPrediction {
            answer_text: answer,
            token_logprobs: vec![per_token; tokens],
            truncated_input: input.truncated,
            backend: self.backend().to_string(),
        })
    }
}

/// One line of the prediction cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCacheRecord {
    pub key: String,
    pub question: String,
    pub table_hash: String,
    pub answer: String,
    pub token_logprobs: Vec<f64>,
    pub truncated: bool,
    #[serde(default)]
    pub backend: Option<String>,
}

impl Keyed for PredictionCacheRecord {
    fn key(&self) -> &str {
        &self.key
    }
}

pub type PredictionCache = JsonlCache<PredictionCacheRecord>;

fn prediction_from_record(record: PredictionCacheRecord) -> ReaderPrediction {
    ReaderPrediction {
        answer_text: record.answer,
        token_logprobs: record.token_logprobs,
        truncated_input: record.truncated,
        backend: record.backend.unwrap_or_else(|| "replay".into()),
    }
}

/// Cache-only backend; a miss is an error.
pub struct ReplayReader {
    cache: Arc<PredictionCache>,
}

impl ReplayReader {
    pub fn new(cache: Arc<PredictionCache>) -> Self {
        ReplayReader { cache }
    }
}

impl Reader for ReplayReader {
    fn backend(&self) -> &str {
        "replay"
    }

    fn predict(
        &self,
        question: &str,
        table: &Table,
        budget_tokens: usize,
    ) -> Result<ReaderPrediction, BackendError> {
        let input = linearize(question, table, budget_tokens);
        let key = prediction_key(question, &input);
        self.cache
            .get(&key)
            .map(prediction_from_record)
            .ok_or(BackendError::CacheMiss(key))
    }
}

/// Answers from the cache when possible and records fresh predictions.
pub struct CachingReader {
    inner: Box<dyn Reader>,
    cache: Arc<PredictionCache>,
}

impl CachingReader {
    pub fn new(inner: Box<dyn Reader>, cache: Arc<PredictionCache>) -> Self {
        CachingReader { inner, cache }
    }
}

impl Reader for CachingReader {
    fn backend(&self) -> &str {
        self.inner.backend()
    }

    fn predict(
        &self,
        question: &str,
        table: &Table,
        budget_tokens: usize,
    ) -> Result<ReaderPrediction, BackendError> {
        let input = linearize(question, table, budget_tokens);
        let key = prediction_key(question, &input);
        if let Some(record) = self.cache.get(&key) {
            return Ok(prediction_from_record(record));
        }
        let prediction = self.inner.predict(question, table, budget_tokens)?;
        let record = PredictionCacheRecord {
            key,
            question: question.to_string(),
            table_hash: content_key(&[&input.text]),
            answer: prediction.answer_text.clone(),
            token_logprobs: prediction.token_logprobs.clone(),
            truncated: prediction.truncated_input,
            backend: Some(prediction.backend.clone()),
        };
        if let Err(err) = self.cache.append(record) {
            log::warn!("prediction cache append failed: {err}");
        }
        Ok(prediction)
    }
}

/// Scoring-service backend.
///
/// Request: `{question, linearized_input, table: {columns, rows},
/// max_tokens_context}` where `table` holds only the rows that fit the budget.
/// Response: `{answer, token_logprobs}`. A service that reports only a total
/// `score` and `num_tokens` is adapted by spreading the score evenly over the
/// tokens, which loses the per-token shape.
pub struct RemoteReader {
    client: JsonClient,
    endpoint: String,
}

impl RemoteReader {
    pub fn new(config: &ReaderConfig) -> Result<Self, ReaderConfigError> {
        let endpoint = config
            .endpoint_url
            .clone()
            .ok_or(ReaderConfigError::Missing("remote", "endpoint_url"))?;
        let bearer = credential_from_env(config.api_key_env.as_deref())
            .map_err(ReaderConfigError::Credential)?;
        let client = JsonClient::new(
            Duration::from_secs(config.timeout_secs),
            bearer,
            config.max_retries,
        )
        .map_err(|e| ReaderConfigError::Credential(e.to_string()))?;
        Ok(RemoteReader { client, endpoint })
    }

    pub fn request_body(question: &str, table: &Table, budget_tokens: usize) -> Value {
        let input = linearize(question, table, budget_tokens);
        let view = table.head(input.rows_kept);
        json!({
            "question": question,
            "linearized_input": input.text,
            "table": {"columns": view.columns(), "rows": view.rows()},
            "max_tokens_context": budget_tokens,
        })
    }
}

/// Reads `{answer, token_logprobs}` or the `{answer, score, num_tokens}`
/// fallback.
pub fn parse_reader_response(body: &Value) -> Result<(String, Vec<f64>), BackendError> {
    let malformed = |m: &str| BackendError::MalformedResponse(m.to_string());
    let answer = body
        .get("answer")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing string field `answer`"))?
        .to_string();
    if let Some(list) = body.get("token_logprobs") {
        let values = list
            .as_array()
            .ok_or_else(|| malformed("`token_logprobs` is not an array"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| malformed("non-numeric token logprob")))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok((answer, values));
    }
    let score = body.get("score").and_then(Value::as_f64);
    let n = body.get("num_tokens").and_then(Value::as_u64);
    match (score, n) {
        (Some(score), Some(n)) if n > 0 => Ok((answer, vec![score / n as f64; n as usize])),
        _ => Err(malformed("neither `token_logprobs` nor `score` with `num_tokens`")),
    }
}

impl Reader for RemoteReader {
    fn backend(&self) -> &str {
        "remote"
    }

    fn predict(
        &self,
        question: &str,
        table: &Table,
        budget_tokens: usize,
    ) -> Result<ReaderPrediction, BackendError> {
        let body = Self::request_body(question, table, budget_tokens);
        let response = self
            .client
            .post(&self.endpoint, &body)
            .map_err(|e| match e {
                crate::http::HttpError::Malformed { message, .. } => {
                    BackendError::MalformedResponse(message)
                }
                other => BackendError::Network(other.to_string()),
            })?;
        let (answer_text, token_logprobs) = parse_reader_response(&response)?;
        let prediction = ReaderPrediction {
            answer_text,
            token_logprobs,
            truncated_input: linearize(question, table, budget_tokens).truncated,
            backend: self.backend().to_string(),
        };
        prediction.validate()?;
        Ok(prediction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderBackend {
    Remote,
    Replay,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderConfig {
    pub backend: ReaderBackend,
    pub endpoint_url: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Replay source, or recording target for the other backends.
    pub cache_path: Option<PathBuf>,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        ReaderConfig {
            backend: ReaderBackend::Toy,
            endpoint_url: None,
            api_key_env: None,
            timeout_secs: 30,
            max_retries: 1,
            cache_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReaderConfigError {
    #[error("the {0} reader needs {1}")]
    Missing(&'static str, &'static str),
    #[error("{0}")]
    Credential(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub fn build_reader(config: &ReaderConfig) -> Result<Box<dyn Reader>, ReaderConfigError> {
    let cache = match &config.cache_path {
        Some(path) => Some(Arc::new(PredictionCache::open(path)?)),
        None => None,
    };
    let inner: Box<dyn Reader> = match config.backend {
        ReaderBackend::Replay => {
            let cache = cache.ok_or(ReaderConfigError::Missing("replay", "cache_path"))?;
            return Ok(Box::new(ReplayReader::new(cache)));
        }
        ReaderBackend::Toy => Box::new(ToyReader),
        ReaderBackend::Remote => Box::new(RemoteReader::new(config)?),
    };
    Ok(match cache {
        Some(cache) => Box::new(CachingReader::new(inner, cache)),
        None => inner,
    })
}
