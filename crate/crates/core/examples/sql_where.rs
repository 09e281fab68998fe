//! Translate SQL WHERE clauses over `cN` columns into row predicates.
//!
//! cargo run --example sql_where

use tabtool::eval::where_clause;
use tabtool::filter::{render_predicate, translate_sql_where, ColumnMap};

fn main() {
    let header: Vec<String> = ["Year", "Division", "League", "Attendance"].iter().map(|s| s.to_string()).collect();
    let columns = ColumnMap::for_header(&header);

    let queries = [
        "select c2 from w where c1_number = 2005",
        "select c3 from w where c2 = 'usl a-league' and c4_number >= 5000",
        "select count(*) from w where c3 like '%pro%' or c1_number between 1999 and 2001",
        "select c1 from w where c2 not in ('4', '5')",
        "select c1 from w where c4_number > (select max(c4_number) from w)",
        "select c1 from w order by c4_number desc limit 1",
    ];
    for sql in queries {
        print!("{sql}\n  -> ");
        let Some(clause) = where_clause(sql) else {
            println!("no usable WHERE clause\n");
            continue;
        };
        match translate_sql_where(clause, &columns) {
            Ok(expr) => println!("{}\n", render_predicate(&expr)),
            Err(e) => println!("untranslatable: {e}\n"),
        }
    }
}
