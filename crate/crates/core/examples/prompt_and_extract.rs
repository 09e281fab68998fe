//! Build a generation prompt and pull the predicate out of a completion.
//!
//! cargo run --example prompt_and_extract

use tabtool::table::Table;
use tabtool::toolgen::{build_prompt, extract_filter_source, tool_from_source};

fn main() {
    let table = Table::from_strs(
        "players",
        &["Player", "No.", "School/Club Team"],
        &[
            &["Jarrett Jack", "2", "Georgia Tech"],
            &["Jermaine Jackson", "8", "Detroit"],
            &["Voshon Lenard", "21", "Minnesota"],
        ],
    );
    let question = "which player went to georgia tech?";
    let prompt = build_prompt(question, &table, 2);
    println!("--- prompt ({} chars, tail shown) ---", prompt.len());
    let tail: Vec<&str> = prompt.lines().rev().take(8).collect();
    for line in tail.into_iter().rev() {
        println!("{line}");
    }

    let completions = [
        " 'georgia' in row_dict['School/Club Team'].lower(), axis=1)]\n>>> print(new_table)",
        "row['No.'] == '2'",
        "Sorry, I can't help with that.",
        " row['Player'] ==, axis=1)]",
    ];
    println!("\n--- completions ---");
    for c in completions {
        match extract_filter_source(c) {
            Ok(src) => match tool_from_source(&src, c, "example", String::new()) {
                Ok(tool) => println!("{c:?}\n  ok: {}", tabtool::filter::render_predicate(&tool.predicate)),
                Err(e) => println!("{c:?}\n  {}: {e}", e.kind()),
            },
            Err(e) => println!("{c:?}\n  extract_error: {e}"),
        }
    }
}
