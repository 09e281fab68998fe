use crate::table::Table;

/// The fixed code line the completion continues from.
pub const SCAFFOLD_PREFIX: &str = ">>> new_table = table[table.apply(lambda row_dict:";

/// The text that closes the scaffold after the predicate body.
pub const SCAFFOLD_SUFFIX: &str = ", axis=1)]";

/// Builds the zero-shot row-filter prompt.
///
/// The table is shown column by column with at most `schema_rows` values
/// each, so the model sees the schema and cell format but not the data.
pub fn build_prompt(question: &str, table: &Table, schema_rows: usize) -> String {
    let schema_rows = schema_rows.max(1);
    let mut out = String::new();
    out.push_str("User 1:\n");
    out.push_str("I need an expert to help me answer the question by making the table smaller.\n");
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\n\n");
    out.push_str(&render_schema(table, schema_rows));
    out.push_str("\n\n");
    out.push_str("User 2:\n");
    out.push_str("For '");
    out.push_str(question);
    out.push_str(
        "' the most impactful change will be to filter the rows. Since I don't know all \
         the rows I'll use rough string matching, float casting, lowering and be as broad \
         as possible.\n\n",
    );
    out.push_str(SCAFFOLD_PREFIX);
    out
}

/// `table = {'Col': ['v1', 'v2', ...\n'Col2': [...\n}`
pub fn render_schema(table: &Table, schema_rows: usize) -> String {
    let elided = table.num_rows() > schema_rows;
    let mut out = String::from("table = {");
    for (idx, name) in table.columns().iter().enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        out.push_str(&py_quote(name));
        out.push_str(": [");
        let values: Vec<String> = table
            .rows()
            .iter()
            .take(schema_rows)
            .map(|row| py_quote(&row[idx]))
            .collect();
        out.push_str(&values.join(", "));
        if elided {
            out.push_str(", ...");
        } else {
            out.push(']');
        }
    }
    out.push_str("\n}");
    out
}

fn py_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}
