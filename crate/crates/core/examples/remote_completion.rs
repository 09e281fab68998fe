//! Talk to HTTP completion and reader endpoints.
//!
//! A throwaway local server stands in for both services here. Point
//! `endpoint_url` at a real one to use it instead.
//!
//! cargo run --example remote_completion

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use serde_json::{json, Value};
use tabtool::filter::render_predicate;
use tabtool::reader::{build_reader, ReaderBackend, ReaderConfig};
use tabtool::table::Table;
use tabtool::toolgen::{build_generator, GeneratorBackend, GeneratorConfig};

fn serve(listener: TcpListener) {
    for stream in listener.incoming() {
        let mut stream = stream.unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line.trim().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let request: Value = serde_json::from_slice(&body).unwrap();

        let reply = if request_line.contains("/completions") {
            println!("[server] completion prompt ends with: {:?}", request["prompt"].as_str().unwrap().lines().last());
            json!({"choices": [{"text": " 'tech' in row['School/Club Team'].lower(), axis=1)]"}]})
        } else {
            let rows = request["table"]["rows"].as_array().unwrap();
            println!("[server] reader got {} rows", rows.len());
            json!({"answer": rows[0][0], "token_logprobs": [-0.05, -0.2]})
        };
        let text = reply.to_string();
        write!(stream, "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}", text.len()).unwrap();
    }
}

fn main() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || serve(listener));

    let table = Table::from_strs(
        "players",
        &["Player", "School/Club Team"],
        &[&["Jermaine Jackson", "Detroit"], &["Jarrett Jack", "Georgia Tech"]],
    );
    let question = "which player went to georgia tech?";

    let generator = build_generator(&GeneratorConfig {
        backend: GeneratorBackend::Remote,
        endpoint_url: Some(format!("{base}/v1/completions")),
        model: Some("any-completion-model".into()),
        ..GeneratorConfig::default()
    })
    .unwrap();
    let tool = generator.generate(question, &table).unwrap();
    println!("tool: {}", render_predicate(&tool.predicate));

    let filtered = tabtool::table::apply_row_filter(&table, &tool.predicate, &Default::default());
    let reader = build_reader(&ReaderConfig {
        backend: ReaderBackend::Remote,
        endpoint_url: Some(format!("{base}/read")),
        ..ReaderConfig::default()
    })
    .unwrap();
    let p = reader.predict(question, &filtered.table, 1024).unwrap();
    println!("answer: {} (seq_log_prob {:.3})", p.answer_text, p.seq_log_prob().unwrap());
}
