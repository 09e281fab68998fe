//! How the token budget cuts a table, and what the toy reader sees.
//!
//! cargo run --example linearize_and_truncate

use tabtool::reader::{Reader, ToyReader};
use tabtool::table::{linearize, Table};

fn main() {
    let rows: Vec<Vec<String>> = (1..=40)
        .map(|i| vec![format!("Player {i}"), format!("Team {}", i % 4), (i * 7).to_string()])
        .collect();
    let table = Table::new("league", vec!["Player".into(), "Team".into(), "Points".into()], rows).unwrap();
    let question = "what is the value of Points where Player == 'Player 33'?";

    for budget in [40, 120, 200, 1024] {
        let input = linearize(question, &table, budget);
        let p = ToyReader.predict(question, &table, budget).unwrap();
        println!(
            "budget {budget:>4}: tokens={:>3} rows_kept={:>2} truncated={:<5} answer={:?} seq_log_prob={:.2}",
            input.token_count,
            input.rows_kept,
            input.truncated,
            p.answer_text,
            p.seq_log_prob().unwrap()
        );
    }

    let small = linearize(question, &table.head(2), 1024);
    println!("\n{}", small.text);
}
