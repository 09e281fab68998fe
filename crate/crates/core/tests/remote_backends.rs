mod common;

use common::MockServer;
use serde_json::{json, Value};

use tabtool::filter::render_predicate;
use tabtool::reader::{build_reader, BackendError, ReaderBackend, ReaderConfig};
use tabtool::table::Table;
use tabtool::toolgen::{build_generator, GenFailure, GeneratorBackend, GeneratorConfig, SCAFFOLD_PREFIX};

fn players() -> Table {
    Table::from_strs(
        "players",
        &["Player", "School/Club Team"],
        &[
            &["Jarrett Jack", "Georgia Tech"],
            &["Jermaine Jackson", "Detroit"],
            &["Jermaine O'Neal", "Eau Claire High School"],
        ],
    )
}

fn completion(text: &str) -> (u16, String) {
    (200, json!({"choices": [{"text": text}]}).to_string())
}

fn generator_config(url: &str) -> GeneratorConfig {
    GeneratorConfig {
        backend: GeneratorBackend::Remote,
        endpoint_url: Some(url.to_string()),
        model: Some("completion-model".into()),
        max_retries: 2,
        ..GeneratorConfig::default()
    }
}

#[test]
fn generator_sends_prompt_and_parses_completion() {
    let server = MockServer::start(vec![completion(
        " 'georgia' in row_dict['School/Club Team'].lower(), axis=1)]\n>>> print(new_table)",
    )]);
    std::env::set_var("TABTOOL_TEST_KEY", "secret-token");
    let config = GeneratorConfig {
        api_key_env: Some("TABTOOL_TEST_KEY".into()),
        ..generator_config(&server.url)
    };
    let generator = build_generator(&config).unwrap();
    let tool = generator.generate("which player went to georgia tech?", &players()).unwrap();
    assert_eq!(
        render_predicate(&tool.predicate),
        "'georgia' in lower(row['School/Club Team'])"
    );
    assert_eq!(tool.source, "remote");

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].0, "authorization: Bearer secret-token");
    let body: Value = serde_json::from_str(&requests[0].1).unwrap();
    assert_eq!(body["model"], "completion-model");
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["stop"], json!(["\n"]));
    let prompt = body["prompt"].as_str().unwrap();
    assert!(prompt.ends_with(SCAFFOLD_PREFIX));
    assert!(prompt.contains("which player went to georgia tech?"));
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(vec![
        (500, "{}".into()),
        completion(" row['Player'] == 'Jarrett Jack', axis=1)]"),
    ]);
    let tool = build_generator(&generator_config(&server.url))
        .unwrap()
        .generate("q", &players())
        .unwrap();
    assert_eq!(render_predicate(&tool.predicate), "row['Player'] == 'Jarrett Jack'");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![(404, "{}".into())]);
    let err = build_generator(&generator_config(&server.url))
        .unwrap()
        .generate("q", &players())
        .unwrap_err();
    assert_eq!(err.kind(), "network");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn unusable_completions_are_classified() {
    let server = MockServer::start(vec![
        completion("I am not sure what to filter."),
        completion(" row['Player'] ==, axis=1)]"),
    ]);
    let generator = build_generator(&generator_config(&server.url)).unwrap();
    assert!(matches!(generator.generate("q1", &players()), Err(GenFailure::ExtractError(_))));
    assert!(matches!(generator.generate("q2", &players()), Err(GenFailure::ParseError(_))));
}

#[test]
fn warmed_tool_cache_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(vec![completion(" row['Player'] == 'Jarrett Jack', axis=1)]")]);
    let config = GeneratorConfig {
        cache_path: Some(dir.path().join("tools.jsonl")),
        ..generator_config(&server.url)
    };
    let first = build_generator(&config).unwrap().generate("q", &players()).unwrap();
    assert_eq!(server.requests().len(), 1);
    // A fresh generator over the same file answers from the cache.
    let again = build_generator(&config).unwrap().generate("q", &players()).unwrap();
    assert_eq!(again.predicate, first.predicate);
    assert_eq!(server.requests().len(), 1);
    let replay = GeneratorConfig {
        backend: GeneratorBackend::Replay,
        ..config
    };
    assert_eq!(build_generator(&replay).unwrap().generate("q", &players()).unwrap().predicate, first.predicate);
}

fn reader_config(url: &str) -> ReaderConfig {
    ReaderConfig {
        backend: ReaderBackend::Remote,
        endpoint_url: Some(url.to_string()),
        ..ReaderConfig::default()
    }
}

#[test]
fn reader_wire_format() {
    let server = MockServer::start(vec![(
        200,
        json!({"answer": "Georgia Tech", "token_logprobs": [-0.1, -0.3]}).to_string(),
    )]);
    let reader = build_reader(&reader_config(&server.url)).unwrap();
    let p = reader.predict("where did jarrett jack play?", &players(), 1024).unwrap();
    assert_eq!(p.answer_text, "Georgia Tech");
    assert!((p.seq_log_prob().unwrap() + 0.2).abs() < 1e-12);
    let body: Value = serde_json::from_str(&server.requests()[0].1).unwrap();
    assert_eq!(body["question"], "where did jarrett jack play?");
    assert_eq!(body["max_tokens_context"], 1024);
    assert_eq!(body["table"]["columns"], json!(["Player", "School/Club Team"]));
    assert_eq!(body["table"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn reader_sends_only_rows_that_fit() {
    let server = MockServer::start(vec![(200, json!({"answer": "x", "token_logprobs": [-1.0]}).to_string())]);
    let reader = build_reader(&reader_config(&server.url)).unwrap();
    let p = reader.predict("q", &players(), 12).unwrap();
    assert!(p.truncated_input);
    let body: Value = serde_json::from_str(&server.requests()[0].1).unwrap();
    assert_eq!(body["table"]["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn reader_total_score_fallback_and_errors() {
    let server = MockServer::start(vec![
        (200, json!({"answer": "a b c d", "score": -2.0, "num_tokens": 4}).to_string()),
        (200, json!({"answer": "a", "token_logprobs": [0.7]}).to_string()),
        (200, json!({"text": "a"}).to_string()),
    ]);
    let reader = build_reader(&reader_config(&server.url)).unwrap();
    let p = reader.predict("q1", &players(), 1024).unwrap();
    assert_eq!(p.token_logprobs, vec![-0.5; 4]);
    assert!(matches!(reader.predict("q2", &players(), 1024), Err(BackendError::MalformedResponse(_))));
    assert!(matches!(reader.predict("q3", &players(), 1024), Err(BackendError::MalformedResponse(_))));
}

#[test]
fn warmed_prediction_cache_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(vec![(200, json!({"answer": "x", "token_logprobs": [-0.4]}).to_string())]);
    let config = ReaderConfig {
        cache_path: Some(dir.path().join("predictions.jsonl")),
        ..reader_config(&server.url)
    };
    let first = build_reader(&config).unwrap().predict("q", &players(), 1024).unwrap();
    let second = build_reader(&config).unwrap().predict("q", &players(), 1024).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn unreachable_reader_is_a_network_error() {
    let reader = build_reader(&ReaderConfig {
        max_retries: 0,
        ..reader_config("http://127.0.0.1:9/score")
    })
    .unwrap();
    assert!(matches!(reader.predict("q", &players(), 1024), Err(BackendError::Network(_))));
}
