//! The offline filter generator: quoted or capitalized question spans matched
//! against cells, with a tautology when nothing matches.
//!
//! cargo run --example heuristic_tools

use tabtool::filter::render_predicate;
use tabtool::table::{apply_row_filter, FilterLimits, Table};
use tabtool::toolgen::{candidate_terms, FilterGenerator, HeuristicGenerator, RandomPredicateGenerator};

fn main() {
    let table = Table::from_strs(
        "cups",
        &["Year", "Division", "League", "Open Cup"],
        &[
            &["2001", "2", "USL A-League", "4th Round"],
            &["2002", "2", "USL A-League", "Quarterfinals"],
            &["2003", "2", "USL A-League", "Did not qualify"],
            &["2004", "2", "USL A-League", "4th Round"],
            &["2005", "2", "USL First Division", "4th Round"],
        ],
    );
    let questions = [
        "which year did they reach the Quarterfinals?",
        "how many seasons were played in the 'usl first division'?",
        "how many times did they exit in the 4th Round?",
        "what year did they not qualify?",
    ];

    let heuristic = HeuristicGenerator;
    let adversarial = RandomPredicateGenerator::new(7);
    for q in questions {
        println!("{q}");
        println!("  terms:       {:?}", candidate_terms(q));
        for g in [&heuristic as &dyn FilterGenerator, &adversarial] {
            let tool = g.generate(q, &table).unwrap();
            let out = apply_row_filter(&table, &tool.predicate, &FilterLimits::default());
            println!(
                "  {:<12} {}  -> rows {} (revert: {})",
                g.backend(),
                render_predicate(&tool.predicate),
                out.table.num_rows(),
                out.revert_reason
            );
        }
    }
}
