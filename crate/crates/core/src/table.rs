//! Tables and the operations that transform them.
//!
//! A [`Table`] is a rectangular grid of raw text cells. Cells are never
//! parsed eagerly; numeric interpretation only happens inside predicates.

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{eval_predicate_counted, parse_predicate, EvalError, EvalLimits, Expr, RowBinding};

/// Default context budget in whitespace tokens.
pub const DEFAULT_BUDGET_TOKENS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("table has no columns")]
    EmptyHeader,
    #[error("row {row} has {width} cells but the header has {header_width}")]
    RowTooWide {
        row: usize,
        width: usize,
        header_width: usize,
    },
}

/// Non-fatal repairs made while validating a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationWarning {
    PaddedRow { row: usize, missing: usize },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::PaddedRow { row, missing } => {
                write!(f, "row {row} padded with {missing} empty cell(s)")
            }
        }
    }
}

/// Builds a rectangular table, padding short rows with empty cells.
pub fn validate_table(
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
) -> Result<(Table, Vec<ValidationWarning>), ValidationError> {
    if columns.is_empty() {
        return Err(ValidationError::EmptyHeader);
    }
    let width = columns.len();
    let mut warnings = Vec::new();
    let mut fixed = Vec::with_capacity(rows.len());
    for (idx, mut row) in rows.into_iter().enumerate() {
        if row.len() > width {
            return Err(ValidationError::RowTooWide {
                row: idx,
                width: row.len(),
                header_width: width,
            });
        }
        if row.len() < width {
            let missing = width - row.len();
            log::warn!("row {idx} padded with {missing} empty cell(s)");
            warnings.push(ValidationWarning::PaddedRow { row: idx, missing });
            row.resize(width, String::new());
        }
        fixed.push(row);
    }
    Ok((
        Table {
            id: String::new(),
            columns,
            rows: fixed,
        },
        warnings,
    ))
}

impl Table {
    /// Validates and names a table; short rows are padded.
    pub fn new(
        id: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Table, ValidationError> {
        let (table, _) = validate_table(columns, rows)?;
        Ok(table.with_id(id))
    }

    /// Convenience constructor from string slices; panics on invalid shape.
    pub fn from_strs(id: &str, columns: &[&str], rows: &[&[&str]]) -> Table {
        let columns = columns.iter().map(|s| s.to_string()).collect();
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        let (table, _) = validate_table(columns, rows).expect("valid table literal");
        table.with_id(id)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Table {
        self.id = id.into();
        self
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Index of the last column with this name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().rposition(|c| c == name)
    }

    /// A table with the same header and the selected rows, in input order.
    pub fn select_rows(&self, keep: &[usize]) -> Table {
        Table {
            id: self.id.clone(),
            columns: self.columns.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Table {
        Table {
            id: self.id.clone(),
            columns: self.columns.clone(),
            rows: self.rows.iter().take(n).cloned().collect(),
        }
    }
}

/// The question and table serialized into one model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedInput {
    pub text: String,
    pub token_count: usize,
    pub truncated: bool,
    /// Number of leading table rows present in `text`.
    pub rows_kept: usize,
}

/// Whitespace token count used as the length proxy for context budgets.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Serializes `question [HEAD] c1, ..., cN [ROW] 1 r1 [ROW] 2 r2 ...`.
///
/// When the full serialization exceeds `budget_tokens`, whole trailing rows
/// are dropped until it fits. The question and header are never cut, so an
/// input whose header alone exceeds the budget keeps zero rows and is still
/// over budget.
pub fn linearize(question: &str, table: &Table, budget_tokens: usize) -> LinearizedInput {
    let header = format!("[HEAD] {}", table.columns.join(", "));
    let prefix_tokens = count_tokens(question) + count_tokens(&header);
    let row_texts: Vec<String> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| format!("[ROW] {} {}", i + 1, row.join(", ")))
        .collect();
    let row_tokens: Vec<usize> = row_texts.iter().map(|r| count_tokens(r)).collect();
    let full_tokens = prefix_tokens + row_tokens.iter().sum::<usize>();
    let truncated = full_tokens > budget_tokens;

    let mut rows_kept = row_texts.len();
    let mut token_count = full_tokens;
    if truncated {
        rows_kept = 0;
        token_count = prefix_tokens;
        for tokens in &row_tokens {
            if token_count + tokens > budget_tokens {
                break;
            }
            token_count += tokens;
            rows_kept += 1;
        }
    }

    let mut parts: Vec<&str> = Vec::with_capacity(rows_kept + 2);
    if !question.is_empty() {
        parts.push(question);
    }
    parts.push(&header);
    parts.extend(row_texts[..rows_kept].iter().map(String::as_str));
    LinearizedInput {
        text: parts.join(" "),
        token_count,
        truncated,
        rows_kept,
    }
}

/// Why a filter application fell back to the original table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevertReason {
    None,
    ParseError,
    EvalError,
    EmptyResult,
    BudgetExceeded,
}

impl RevertReason {
    pub const ALL: [RevertReason; 5] = [
        RevertReason::None,
        RevertReason::ParseError,
        RevertReason::EvalError,
        RevertReason::EmptyResult,
        RevertReason::BudgetExceeded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RevertReason::None => "none",
            RevertReason::ParseError => "parse_error",
            RevertReason::EvalError => "eval_error",
            RevertReason::EmptyResult => "empty_result",
            RevertReason::BudgetExceeded => "budget_exceeded",
        }
    }
}

impl fmt::Display for RevertReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub table: Table,
    pub applied: bool,
    pub revert_reason: RevertReason,
    /// The first row error that triggered a revert, if any.
    pub error: Option<EvalError>,
}

impl FilterOutcome {
    fn reverted(table: &Table, reason: RevertReason, error: Option<EvalError>) -> FilterOutcome {
        FilterOutcome {
            table: table.clone(),
            applied: false,
            revert_reason: reason,
            error,
        }
    }

    fn applied(table: Table) -> FilterOutcome {
        FilterOutcome {
            table,
            applied: true,
            revert_reason: RevertReason::None,
            error: None,
        }
    }
}

/// Evaluation budgets for a whole filter application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLimits {
    pub eval: EvalLimits,
    pub max_total_steps: u64,
}

impl Default for FilterLimits {
    fn default() -> Self {
        FilterLimits {
            eval: EvalLimits::default(),
            max_total_steps: 10_000_000,
        }
    }
}

/// Keeps the rows for which `predicate` holds.
///
/// Any row error abandons the whole application and returns the input table
/// unchanged, as does a result with zero rows.
pub fn apply_row_filter(table: &Table, predicate: &Expr, limits: &FilterLimits) -> FilterOutcome {
    let mut keep = Vec::new();
    let mut total_steps: u64 = 0;
    for (idx, row) in table.rows.iter().enumerate() {
        let binding = RowBinding::new(&table.columns, row);
        let (result, steps) = eval_predicate_counted(predicate, &binding, &limits.eval);
        total_steps += steps;
        match result {
            Ok(true) => keep.push(idx),
            Ok(false) => {}
            Err(err) => {
                let reason = if err.is_budget() {
                    RevertReason::BudgetExceeded
                } else {
                    RevertReason::EvalError
                };
                return FilterOutcome::reverted(table, reason, Some(err));
            }
        }
        if total_steps > limits.max_total_steps {
            return FilterOutcome::reverted(
                table,
                RevertReason::BudgetExceeded,
                Some(EvalError::StepBudgetExceeded(limits.max_total_steps)),
            );
        }
    }
    if keep.is_empty() {
        return FilterOutcome::reverted(table, RevertReason::EmptyResult, None);
    }
    FilterOutcome::applied(table.select_rows(&keep))
}

/// Parses `source` and applies it; unparseable sources revert with
/// [`RevertReason::ParseError`].
pub fn apply_row_filter_source(table: &Table, source: &str, limits: &FilterLimits) -> FilterOutcome {
    match parse_predicate(source) {
        Ok(expr) => apply_row_filter(table, &expr, limits),
        Err(_) => FilterOutcome::reverted(table, RevertReason::ParseError, None),
    }
}

/// Removes `floor(n * fraction)` rows chosen uniformly without replacement.
///
/// Deterministic in `(table, fraction, seed)`; survivors keep their order.
pub fn random_row_filter(table: &Table, fraction: f64, seed: u64) -> Table {
    let n = table.num_rows();
    let fraction = fraction.clamp(0.0, 1.0);
    let remove = ((n as f64) * fraction).floor() as usize;
    if remove == 0 {
        return table.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = vec![false; n];
    for i in index::sample(&mut rng, n, remove) {
        removed[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    table.select_rows(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn players() -> Table {
        Table::from_strs(
            "players",
            &["Player", "No.", "School/Club Team"],
            &[
                &["Jarrett Jack", "1", "Georgia Tech"],
                &["Jermaine Jackson", "8", "Detroit"],
            ],
        )
    }

    #[test]
    fn validate_well_formed() {
        let (t, w) = validate_table(
            vec!["A".into(), "B".into()],
            vec![vec!["1".into(), "2".into()]],
        )
        .unwrap();
        assert_eq!(t.num_rows(), 1);
        assert_eq!(t.num_columns(), 2);
        assert!(w.is_empty());
    }

    #[test]
    fn validate_pads_short_rows() {
        let (t, w) = validate_table(vec!["A".into(), "B".into()], vec![vec!["1".into()]]).unwrap();
        assert_eq!(t.rows()[0], vec!["1".to_string(), String::new()]);
        assert_eq!(w, vec![ValidationWarning::PaddedRow { row: 0, missing: 1 }]);
    }

    #[test]
    fn validate_rejects_empty_header_and_wide_rows() {
        assert_eq!(
            validate_table(vec![], vec![vec!["1".into()]]).unwrap_err(),
            ValidationError::EmptyHeader
        );
        assert!(matches!(
            validate_table(vec!["A".into()], vec![vec!["1".into(), "2".into()]]),
            Err(ValidationError::RowTooWide { row: 0, .. })
        ));
    }

    #[test]
    fn duplicate_and_empty_column_names_are_allowed() {
        let t = Table::from_strs("d", &["A", "A", ""], &[&["1", "2", "3"]]);
        assert_eq!(t.column_index("A"), Some(1));
    }

    #[test]
    fn linearize_format() {
        let t = Table::from_strs("w", &["Year", "Winner"], &[&["2020", "A"], &["2021", "B"]]);
        let lin = linearize("who won?", &t, DEFAULT_BUDGET_TOKENS);
        assert_eq!(lin.text, "who won? [HEAD] Year, Winner [ROW] 1 2020, A [ROW] 2 2021, B");
        assert!(!lin.truncated);
        assert_eq!(lin.rows_kept, 2);
        assert_eq!(lin.token_count, count_tokens(&lin.text));
    }

    #[test]
    fn linearize_header_only_budget_drops_all_rows() {
        let t = Table::from_strs("w", &["Year", "Winner"], &[&["2020", "A"], &["2021", "B"]]);
        let budget = count_tokens("who won? [HEAD] Year, Winner");
        let lin = linearize("who won?", &t, budget);
        assert!(lin.truncated);
        assert_eq!(lin.rows_kept, 0);
        assert_eq!(lin.text, "who won? [HEAD] Year, Winner");
        assert!(lin.token_count <= budget);
    }

    #[test]
    fn linearize_long_table_keeps_a_prefix() {
        // 60 rows of five cells each.
        let rows: Vec<Vec<String>> = (0..60)
            .map(|i| {
                vec![
                    format!("Player {i}"),
                    format!("Team {}", i % 7),
                    "Forward".to_string(),
                    format!("{}", i * 3),
                    "New York City".to_string(),
                ]
            })
            .collect();
        let cols = ["Name", "Team", "Position", "Points", "Home City"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (t, _) = validate_table(cols, rows).unwrap();
        let lin = linearize("how many players scored more than 10 points?", &t, 1024);
        // Each row costs 2 markers + 2 + 2 + 1 + 1 + 3 cell tokens = 11;
        // the prefix is 8 question + 7 header tokens, so 60 rows = 675 tokens.
        assert!(!lin.truncated);
        assert_eq!(lin.token_count, 8 + 7 + 60 * 11);
        let tight = linearize("how many players scored more than 10 points?", &t, 500);
        assert!(tight.truncated);
        // floor((500 - 15) / 11) = 44 rows fit.
        assert_eq!(tight.rows_kept, 44);
        assert!(tight.token_count <= 500);
        assert!(tight.text.ends_with("[ROW] 44 Player 43, Team 1, Forward, 129, New York City"));
    }

    #[test]
    fn revert_on_empty_result() {
        let expr = parse_predicate("'Westchester' in lower(row['School/Club Team'])").unwrap();
        let out = apply_row_filter(&players(), &expr, &FilterLimits::default());
        assert!(!out.applied);
        assert_eq!(out.revert_reason, RevertReason::EmptyResult);
        assert_eq!(out.table, players());
    }

    #[test]
    fn tautology_is_identity() {
        let out = apply_row_filter(&players(), &Expr::Bool(true), &FilterLimits::default());
        assert!(out.applied);
        assert_eq!(out.revert_reason, RevertReason::None);
        assert_eq!(out.table, players());
    }

    #[test]
    fn numeric_filter_keeps_order() {
        let t = Table::from_strs("g", &["Opponent", "Goals"], &[&["a", "3"], &["b", "1"], &["c", "2"]]);
        let expr = parse_predicate("float(row['Goals']) >= 2").unwrap();
        let out = apply_row_filter(&t, &expr, &FilterLimits::default());
        assert!(out.applied);
        assert_eq!(out.table.rows(), &[vec!["a".to_string(), "3".into()], vec!["c".into(), "2".into()]]);
    }

    #[test]
    fn any_row_error_aborts_whole_application() {
        // The first row matches, the second cannot be cast.
        let t = Table::from_strs("g", &["Goals"], &[&["3"], &["aged 21"], &["4"]]);
        let expr = parse_predicate("float(row['Goals']) >= 2").unwrap();
        let out = apply_row_filter(&t, &expr, &FilterLimits::default());
        assert!(!out.applied);
        assert_eq!(out.revert_reason, RevertReason::EvalError);
        assert_eq!(out.table, t);
        assert_eq!(out.error, Some(EvalError::NotANumber("aged 21".into())));
    }

    #[test]
    fn budgets_map_to_budget_exceeded() {
        let t = players();
        let expr = parse_predicate("true and true and true").unwrap();
        let per_row = FilterLimits {
            eval: EvalLimits {
                max_steps_per_row: 2,
                ..EvalLimits::default()
            },
            ..FilterLimits::default()
        };
        assert_eq!(apply_row_filter(&t, &expr, &per_row).revert_reason, RevertReason::BudgetExceeded);
        let total = FilterLimits {
            max_total_steps: 6,
            ..FilterLimits::default()
        };
        assert_eq!(apply_row_filter(&t, &expr, &total).revert_reason, RevertReason::BudgetExceeded);
    }

    #[test]
    fn unparseable_source_reverts() {
        let out = apply_row_filter_source(&players(), "exec('rm')", &FilterLimits::default());
        assert_eq!(out.revert_reason, RevertReason::ParseError);
        assert_eq!(out.table, players());
    }

    #[test]
    fn zero_row_table_reverts_as_empty() {
        let t = Table::from_strs("e", &["A"], &[]);
        let out = apply_row_filter(&t, &Expr::Bool(true), &FilterLimits::default());
        assert_eq!(out.revert_reason, RevertReason::EmptyResult);
    }

    #[test]
    fn random_filter_counts() {
        let four = Table::from_strs("r", &["A"], &[&["1"], &["2"], &["3"], &["4"]]);
        let out = random_row_filter(&four, 0.5, 7);
        assert_eq!(out.num_rows(), 2);
        assert_eq!(out, random_row_filter(&four, 0.5, 7));
        assert_eq!(random_row_filter(&four, 0.0, 99), four);

        let five = Table::from_strs("r", &["A"], &[&["1"], &["2"], &["3"], &["4"], &["5"]]);
        assert_eq!(random_row_filter(&five, 0.5, 3).num_rows(), 3);
        assert_eq!(random_row_filter(&five, 1.0, 3).num_rows(), 0);
    }

    #[test]
    fn random_filter_preserves_order() {
        let rows: Vec<Vec<String>> = (0..20).map(|i| vec![i.to_string()]).collect();
        let (t, _) = validate_table(vec!["n".into()], rows).unwrap();
        let out = random_row_filter(&t, 0.5, 11);
        let values: Vec<usize> = out.rows().iter().map(|r| r[0].parse().unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }
}
