//! Query-specific row-filter generation.
//!
//! A generator turns `(question, table)` into a [`GeneratedTool`]: a parsed
//! predicate plus the raw text it came from. Backends:
//!
//! - **remote**: a completion service prompted with [`build_prompt`]; the
//!   completion is cut with [`extract_filter_source`] and parsed.
//! - **heuristic**: deterministic span/column matching, for offline runs.
//! - **replay**: lookup in a JSONL cache written by earlier runs.
//! - **adversarial**: seeded random predicates, for stress-testing the
//!   revert machinery.
//!
//! Generation never panics or raises; every failure is a [`GenFailure`]
//! value, and callers fall back to the original table.

mod extract;
mod heuristic;
mod prompt;
mod random;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cache::{content_key, unix_now, CacheError, JsonlCache, Keyed};
use crate::filter::{parse_predicate, render_predicate, Expr};
use crate::http::{credential_from_env, JsonClient};
use crate::table::Table;

pub use extract::{extract_filter_source, ExtractError};
pub use heuristic::{candidate_terms, heuristic_predicate, select_term};
pub use prompt::{build_prompt, render_schema, SCAFFOLD_PREFIX, SCAFFOLD_SUFFIX};
pub use random::RandomPredicateGenerator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorBackend {
    Remote,
    Heuristic,
    Replay,
}

/// Field names of the completion wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionProtocol {
    pub model_field: String,
    pub prompt_field: String,
    pub temperature_field: String,
    pub max_tokens_field: String,
    pub stop_field: String,
    /// JSON pointer to the completion text in the response.
    pub text_pointer: String,
}

impl Default for CompletionProtocol {
    fn default() -> Self {
        CompletionProtocol {
            model_field: "model".into(),
            prompt_field: "prompt".into(),
            temperature_field: "temperature".into(),
            max_tokens_field: "max_tokens".into(),
            stop_field: "stop".into(),
            text_pointer: "/choices/0/text".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub backend: GeneratorBackend,
    pub endpoint_url: Option<String>,
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub schema_rows: usize,
    /// Extra attempts on network failure only.
    pub max_retries: u32,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub timeout_secs: u64,
    pub cache_path: Option<PathBuf>,
    pub protocol: CompletionProtocol,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            backend: GeneratorBackend::Heuristic,
            endpoint_url: None,
            api_key_env: None,
            model: None,
            temperature: 0.2,
            schema_rows: 2,
            max_retries: 1,
            max_tokens: 128,
            stop: vec!["\n".into()],
            timeout_secs: 30,
            cache_path: None,
            protocol: CompletionProtocol::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("temperature must be >= 0, got {0}")]
    Temperature(f64),
    #[error("schema_rows must be >= 1")]
    SchemaRows,
    #[error("the {0} backend needs {1}")]
    Missing(&'static str, &'static str),
    #[error("{0}")]
    Credential(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Http(#[from] crate::http::HttpError),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.schema_rows < 1 {
            return Err(ConfigError::SchemaRows);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTool {
    pub predicate: Expr,
    pub raw_completion: String,
    pub source: String,
    pub question_table_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum GenFailure {
    #[error("network failure: {0}")]
    Network(String),
    #[error("could not extract a predicate: {0}")]
    ExtractError(String),
    #[error("could not parse predicate: {0}")]
    ParseError(String),
    #[error("no cached tool for key {0}")]
    CacheMiss(String),
    #[error("no tool available: {0}")]
    Unavailable(String),
}

impl GenFailure {
    pub fn kind(&self) -> &'static str {
        match self {
            GenFailure::Network(_) => "network",
            GenFailure::ExtractError(_) => "extract_error",
            GenFailure::ParseError(_) => "parse_error",
            GenFailure::CacheMiss(_) => "cache_miss",
            GenFailure::Unavailable(_) => "unavailable",
        }
    }
}

/// Content hash of a question over a table.
pub fn question_table_key(question: &str, table: &Table) -> String {
    let body = serde_json::to_string(&(table.columns(), table.rows())).expect("table serializes");
    content_key(&[question, &table.id, &body])
}

pub trait FilterGenerator: Send + Sync {
    /// Backend tag recorded on generated tools.
    fn backend(&self) -> &str;

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure>;
}

/// Parses an extracted or cached predicate into a tool.
pub fn tool_from_source(
    source_text: &str,
    raw_completion: &str,
    backend: &str,
    key: String,
) -> Result<GeneratedTool, GenFailure> {
    let predicate =
        parse_predicate(source_text).map_err(|e| GenFailure::ParseError(e.to_string()))?;
    Ok(GeneratedTool {
        predicate,
        raw_completion: raw_completion.to_string(),
        source: backend.to_string(),
        question_table_key: key,
    })
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicGenerator;

impl FilterGenerator for HeuristicGenerator {
    fn backend(&self) -> &str {
        "heuristic"
    }

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure> {
        let predicate = heuristic_predicate(question, table);
        Ok(GeneratedTool {
            raw_completion: render_predicate(&predicate),
            predicate,
            source: self.backend().to_string(),
            question_table_key: question_table_key(question, table),
        })
    }
}

/// One line of the tool cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCacheRecord {
    pub key: String,
    pub question: String,
    pub table_id: String,
    pub raw_completion: String,
    pub canonical_predicate: String,
    pub backend: String,
    pub timestamp: u64,
}

impl Keyed for ToolCacheRecord {
    fn key(&self) -> &str {
        &self.key
    }
}

pub type ToolCache = JsonlCache<ToolCacheRecord>;

/// Cache-only backend.
pub struct ReplayGenerator {
    cache: Arc<ToolCache>,
}

impl ReplayGenerator {
    pub fn new(cache: Arc<ToolCache>) -> Self {
        ReplayGenerator { cache }
    }
}

fn tool_from_record(record: &ToolCacheRecord) -> Result<GeneratedTool, GenFailure> {
    tool_from_source(
        &record.canonical_predicate,
        &record.raw_completion,
        &record.backend,
        record.key.clone(),
    )
}

impl FilterGenerator for ReplayGenerator {
    fn backend(&self) -> &str {
        "replay"
    }

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure> {
        let key = question_table_key(question, table);
        match self.cache.get(&key) {
            Some(record) => tool_from_record(&record),
            None => Err(GenFailure::CacheMiss(key)),
        }
    }
}

/// Wraps a generator, answering from the cache when possible and appending
/// every fresh success to it.
pub struct CachingGenerator {
    inner: Box<dyn FilterGenerator>,
    cache: Arc<ToolCache>,
}

impl CachingGenerator {
    pub fn new(inner: Box<dyn FilterGenerator>, cache: Arc<ToolCache>) -> Self {
        CachingGenerator { inner, cache }
    }
}

impl FilterGenerator for CachingGenerator {
    fn backend(&self) -> &str {
        self.inner.backend()
    }

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure> {
        let key = question_table_key(question, table);
        if let Some(record) = self.cache.get(&key) {
            return tool_from_record(&record);
        }
        let tool = self.inner.generate(question, table)?;
        let record = ToolCacheRecord {
            key,
            question: question.to_string(),
            table_id: table.id.clone(),
            raw_completion: tool.raw_completion.clone(),
            canonical_predicate: render_predicate(&tool.predicate),
            backend: tool.source.clone(),
            timestamp: unix_now(),
        };
        if let Err(err) = self.cache.append(record) {
            log::warn!("tool cache append failed: {err}");
        }
        Ok(tool)
    }
}

/// Completion-service backend.
pub struct RemoteGenerator {
    client: JsonClient,
    endpoint: String,
    config: GeneratorConfig,
}

impl RemoteGenerator {
    pub fn new(config: &GeneratorConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let endpoint = config
            .endpoint_url
            .clone()
            .ok_or(ConfigError::Missing("remote", "endpoint_url"))?;
        let bearer =
            credential_from_env(config.api_key_env.as_deref()).map_err(ConfigError::Credential)?;
        let client = JsonClient::new(
            Duration::from_secs(config.timeout_secs),
            bearer,
            config.max_retries,
        )?;
        Ok(RemoteGenerator {
            client,
            endpoint,
            config: config.clone(),
        })
    }

    /// The JSON request body for a prompt.
    pub fn request_body(&self, prompt: &str) -> Value {
        let p = &self.config.protocol;
        let mut body = serde_json::Map::new();
        if let Some(model) = &self.config.model {
            body.insert(p.model_field.clone(), Value::String(model.clone()));
        }
        body.insert(p.prompt_field.clone(), Value::String(prompt.to_string()));
        body.insert(p.temperature_field.clone(), json!(self.config.temperature));
        body.insert(p.max_tokens_field.clone(), json!(self.config.max_tokens));
        body.insert(p.stop_field.clone(), json!(self.config.stop));
        Value::Object(body)
    }
}

impl FilterGenerator for RemoteGenerator {
    fn backend(&self) -> &str {
        "remote"
    }

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure> {
        let prompt = build_prompt(question, table, self.config.schema_rows);
        let response = self
            .client
            .post(&self.endpoint, &self.request_body(&prompt))
            .map_err(|e| GenFailure::Network(e.to_string()))?;
        let completion = response
            .pointer(&self.config.protocol.text_pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| {
                GenFailure::Network(format!(
                    "response has no string at {}",
                    self.config.protocol.text_pointer
                ))
            })?;
        let source =
            extract_filter_source(completion).map_err(|e| GenFailure::ExtractError(e.to_string()))?;
        tool_from_source(
            &source,
            completion,
            self.backend(),
            question_table_key(question, table),
        )
    }
}

/// Builds the backend described by `config`.
pub fn build_generator(config: &GeneratorConfig) -> Result<Box<dyn FilterGenerator>, ConfigError> {
    config.validate()?;
    let open_cache = || -> Result<Arc<ToolCache>, ConfigError> {
        Ok(Arc::new(match &config.cache_path {
            Some(path) => ToolCache::open(path)?,
            None => ToolCache::in_memory(),
        }))
    };
    Ok(match config.backend {
        GeneratorBackend::Heuristic => match &config.cache_path {
            Some(_) => Box::new(CachingGenerator::new(Box::new(HeuristicGenerator), open_cache()?)),
            None => Box::new(HeuristicGenerator),
        },
        GeneratorBackend::Replay => {
            if config.cache_path.is_none() {
                return Err(ConfigError::Missing("replay", "cache_path"));
            }
            Box::new(ReplayGenerator::new(open_cache()?))
        }
        GeneratorBackend::Remote => Box::new(CachingGenerator::new(
            Box::new(RemoteGenerator::new(config)?),
            open_cache()?,
        )),
    })
}

/// One-shot generation from a config.
pub fn generate_filter(
    config: &GeneratorConfig,
    question: &str,
    table: &Table,
) -> Result<GeneratedTool, GenFailure> {
    let generator = build_generator(config).map_err(|e| GenFailure::Network(e.to_string()))?;
    generator.generate(question, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn players() -> Table {
        Table::from_strs(
            "players",
            &["Player", "School/Club Team"],
            &[&["Jarrett Jack", "Georgia Tech"], &["Jermaine Jackson", "Detroit"]],
        )
    }

    #[test]
    fn config_validation() {
        let bad = GeneratorConfig {
            temperature: -0.1,
            ..GeneratorConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Temperature(_))));
        let bad = GeneratorConfig {
            schema_rows: 0,
            ..GeneratorConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::SchemaRows)));
        assert_eq!(GeneratorConfig::default().temperature, 0.2);
    }

    #[test]
    fn key_depends_on_question_and_table() {
        let t = players();
        assert_ne!(question_table_key("a", &t), question_table_key("b", &t));
        assert_ne!(question_table_key("a", &t), question_table_key("a", &t.head(1)));
        assert_eq!(question_table_key("a", &t), question_table_key("a", &t.clone()));
    }

    #[test]
    fn caching_then_replay_is_identical() {
        let cache = Arc::new(ToolCache::in_memory());
        let recording = CachingGenerator::new(Box::new(HeuristicGenerator), cache.clone());
        let q = "what about Jarrett Jack?";
        let first = recording.generate(q, &players()).unwrap();
        let replay = ReplayGenerator::new(cache);
        let a = replay.generate(q, &players()).unwrap();
        let b = replay.generate(q, &players()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, first);
        assert_eq!(render_predicate(&a.predicate), render_predicate(&first.predicate));
    }

    #[test]
    fn replay_miss() {
        let replay = ReplayGenerator::new(Arc::new(ToolCache::in_memory()));
        assert!(matches!(
            replay.generate("q", &players()),
            Err(GenFailure::CacheMiss(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_a_network_failure() {
        // Port 9 on localhost is closed in the sandbox; the connect fails fast.
        let config = GeneratorConfig {
            backend: GeneratorBackend::Remote,
            endpoint_url: Some("http://127.0.0.1:9/v1/completions".into()),
            max_retries: 0,
            timeout_secs: 2,
            ..GeneratorConfig::default()
        };
        let err = generate_filter(&config, "q?", &players()).unwrap_err();
        assert_eq!(err.kind(), "network");
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let config = GeneratorConfig {
            backend: GeneratorBackend::Remote,
            endpoint_url: Some("http://127.0.0.1:9".into()),
            api_key_env: Some("TABTOOL_TEST_SURELY_UNSET_VAR".into()),
            ..GeneratorConfig::default()
        };
        assert!(matches!(build_generator(&config), Err(ConfigError::Credential(_))));
    }

    #[test]
    fn request_body_uses_protocol_fields() {
        let config = GeneratorConfig {
            backend: GeneratorBackend::Remote,
            endpoint_url: Some("http://127.0.0.1:9".into()),
            model: Some("m".into()),
            protocol: CompletionProtocol {
                prompt_field: "input".into(),
                ..CompletionProtocol::default()
            },
            ..GeneratorConfig::default()
        };
        let remote = RemoteGenerator::new(&config).unwrap();
        let body = remote.request_body("P");
        assert_eq!(body["input"], "P");
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["max_tokens"], 128);
        assert_eq!(body["stop"], json!(["\n"]));
        assert_eq!(body["model"], "m");
    }

    #[test]
    fn gen_failure_serializes_with_kind() {
        let v = serde_json::to_value(GenFailure::CacheMiss("k".into())).unwrap();
        assert_eq!(v, json!({"kind": "cache_miss", "detail": "k"}));
    }
}
