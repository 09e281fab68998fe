//! Parse, render and evaluate row predicates.
//!
//! cargo run --example filter_language

use tabtool::filter::{eval_predicate, parse_predicate, render_predicate, EvalLimits, RowBinding};
use tabtool::table::{apply_row_filter, FilterLimits, Table};

fn main() {
    let table = Table::from_strs(
        "players",
        &["Player", "School/Club Team", "Points"],
        &[
            &["Jarrett Jack", "Georgia Tech", "1,024"],
            &["Jermaine Jackson", "Detroit", "12"],
            &["Jermaine O'Neal", "Eau Claire High School", "n/a"],
        ],
    );

    let sources = [
        "'georgia' in row_dict['School/Club Team'].lower()",
        "len(row['Player']) > 12 and not 'High' in row[#1]",
        "row['Player'].startswith('Jermaine')",
        "float(row['Points']) > 100",
        "row['Team'] == 'Detroit'",
        "row['Player'] ==",
    ];
    for src in sources {
        println!("source:   {src}");
        let expr = match parse_predicate(src) {
            Ok(e) => e,
            Err(e) => {
                println!("  parse error: {e}\n");
                continue;
            }
        };
        println!("  canonical: {}", render_predicate(&expr));

        // Row by row, errors stay local.
        for row in table.rows() {
            let binding = RowBinding::new(table.columns(), row);
            match eval_predicate(&expr, &binding, &EvalLimits::default()) {
                Ok(keep) => println!("  {:<18} {keep}", row[0]),
                Err(e) => println!("  {:<18} error: {e}", row[0]),
            }
        }

        // Whole-table application reverts on any row error or an empty result.
        let out = apply_row_filter(&table, &expr, &FilterLimits::default());
        println!("  applied={} revert={} rows={}\n", out.applied, out.revert_reason, out.table.num_rows());
    }
}
