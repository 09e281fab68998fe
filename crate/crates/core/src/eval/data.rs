//! Dataset ingestion: WikiTableQuestions, WikiSQL and a synthetic generator.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::filter::{CmpOp, Expr};
use crate::table::Table;

use super::metric::ANSWER_SEPARATOR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub table: Table,
    pub gold_answers: Vec<String>,
    /// Reference row filter, when one is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_predicate: Option<Expr>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Loaded instances plus what had to be skipped.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub instances: Vec<QAInstance>,
    pub skipped: usize,
    pub errors: Vec<String>,
}

impl LoadReport {
    fn skip(&mut self, message: String) {
        log::warn!("{message}");
        self.skipped += 1;
        self.errors.push(message);
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
    move |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Undoes the WikiTableQuestions TSV escapes `\n`, `\p` (pipe) and `\\`.
pub fn unescape_wtq(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('p') => out.push('|'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Splits an escaped target value on unescaped `|`.
fn split_targets(raw: &str) -> Vec<String> {
    raw.split(ANSWER_SEPARATOR)
        .map(unescape_wtq)
        .filter(|s| !s.trim().is_empty())
        .collect()
}

/// Reads a table file: `.tsv` uses WikiTableQuestions escaping, anything else
/// is read as quoted CSV. The first line is the header.
pub fn read_table_file(path: &Path, id: &str) -> Result<Table, LoadError> {
    let tsv = path.extension().is_some_and(|e| e == "tsv");
    let mut builder = csv::ReaderBuilder::new();
    builder.has_headers(false).flexible(true);
    if tsv {
        builder.delimiter(b'\t').quoting(false);
    }
    let mut reader = builder.from_path(path).map_err(|e| LoadError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LoadError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let cells: Vec<String> = record
            .iter()
            .map(|c| if tsv { unescape_wtq(c) } else { c.to_string() })
            .collect();
        lines.push(cells);
    }
    if lines.is_empty() {
        return Err(LoadError::Format {
            path: path.to_path_buf(),
            message: "empty table file".into(),
        });
    }
    let columns = lines.remove(0);
    let width = columns.len();
    // Over-wide rows are trimmed at the header width rather than rejected.
    let rows = lines
        .into_iter()
        .map(|mut r| {
            r.truncate(width);
            r
        })
        .collect();
    Table::new(id, columns, rows).map_err(|e| LoadError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a WikiTableQuestions examples TSV (`id, utterance, context,
/// targetValue`); `context` paths are resolved against `tables_dir`.
pub fn load_wtq(tsv_path: &Path, tables_dir: &Path) -> Result<LoadReport, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_path(tsv_path)
        .map_err(|e| LoadError::Format {
            path: tsv_path.to_path_buf(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| LoadError::Format {
            path: tsv_path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| LoadError::Format {
            path: tsv_path.to_path_buf(),
            message: format!("missing column {name}"),
        })
    };
    let (c_id, c_q, c_ctx, c_target) = (
        column("id")?,
        column("utterance")?,
        column("context")?,
        column("targetValue")?,
    );

    let mut report = LoadReport::default();
    let mut tables: HashMap<String, Option<Table>> = HashMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.skip(format!("{}:{}: {e}", tsv_path.display(), line + 2));
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let (id, context) = (field(c_id).to_string(), field(c_ctx).to_string());
        let question = unescape_wtq(field(c_q));
        let gold_answers = split_targets(field(c_target));
        if id.is_empty() || question.trim().is_empty() || gold_answers.is_empty() {
            report.skip(format!("{}:{}: incomplete example {id:?}", tsv_path.display(), line + 2));
            continue;
        }
        let table = tables
            .entry(context.clone())
            .or_insert_with(|| {
                let path = tables_dir.join(&context);
                match read_table_file(&path, &context) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        log::warn!("{e}");
                        None
                    }
                }
            })
            .clone();
        match table {
            Some(table) => report.instances.push(QAInstance {
                id,
                question,
                table,
                gold_answers,
                gold_predicate: None,
            }),
            None => report.skip(format!("{id}: table {context} could not be loaded")),
        }
    }
    Ok(report)
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

type NumberedLines = Vec<(usize, Result<Value, String>)>;

fn read_jsonl(path: &Path) -> Result<NumberedLines, LoadError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, serde_json::from_str(&line).map_err(|e| e.to_string())));
    }
    Ok(out)
}

/// Loads WikiSQL-style JSONL: questions with `table_id`, `question` and
/// `answer`/`answers`, plus tables with `id`, `header` and `rows`. Cell and
/// answer values are coerced to text; SQL fields are ignored.
pub fn load_wikisql(questions_path: &Path, tables_path: &Path) -> Result<LoadReport, LoadError> {
    let mut report = LoadReport::default();
    let mut tables = HashMap::new();
    for (line, value) in read_jsonl(tables_path)? {
        let parsed = value.and_then(|v| {
            let id = v.get("id").map(value_text).ok_or("missing id")?;
            let header: Vec<String> = v
                .get("header")
                .and_then(Value::as_array)
                .ok_or("missing header")?
                .iter()
                .map(value_text)
                .collect();
            let rows: Vec<Vec<String>> = v
                .get("rows")
                .and_then(Value::as_array)
                .ok_or("missing rows")?
                .iter()
                .map(|r| r.as_array().map(|c| c.iter().map(value_text).collect()).unwrap_or_default())
                .collect();
            Table::new(id.clone(), header, rows)
                .map(|t| (id, t))
                .map_err(|e| e.to_string())
        });
        match parsed {
            Ok((id, table)) => {
                tables.insert(id, table);
            }
            Err(e) => report.skip(format!("{}:{line}: {e}", tables_path.display())),
        }
    }
    let stem = questions_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for (line, value) in read_jsonl(questions_path)? {
        let parsed = value.and_then(|v| {
            let question = v.get("question").map(value_text).ok_or("missing question")?;
            let table_id = v.get("table_id").map(value_text).ok_or("missing table_id")?;
            let answers = v.get("answers").or_else(|| v.get("answer")).ok_or("missing answer")?;
            let gold_answers: Vec<String> = match answers {
                Value::Array(items) => items.iter().map(value_text).collect(),
                single => vec![value_text(single)],
            };
            let id = v
                .get("id")
                .map(value_text)
                .unwrap_or_else(|| format!("{stem}-{line}"));
            let table = tables
                .get(&table_id)
                .cloned()
                .ok_or_else(|| format!("unknown table {table_id}"))?;
            if question.trim().is_empty() || gold_answers.is_empty() {
                return Err("empty question or answers".to_string());
            }
            Ok(QAInstance {
                id,
                question,
                table,
                gold_answers,
                gold_predicate: None,
            })
        });
        match parsed {
            Ok(instance) => report.instances.push(instance),
            Err(e) => report.skip(format!("{}:{line}: {e}", questions_path.display())),
        }
    }
    Ok(report)
}

/// Reads instances previously written as JSONL (e.g. a filter subset).
pub fn load_instances_jsonl(path: &Path) -> Result<LoadReport, LoadError> {
    let mut report = LoadReport::default();
    for (line, value) in read_jsonl(path)? {
        match value.and_then(|v| serde_json::from_value::<QAInstance>(v).map_err(|e| e.to_string())) {
            Ok(instance) => report.instances.push(instance),
            Err(e) => report.skip(format!("{}:{line}: {e}", path.display())),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub instances: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Share of `how many rows have ...` questions; the rest are lookups.
    pub count_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            instances: 200,
            min_rows: 5,
            max_rows: 100,
            count_fraction: 0.2,
            seed: 0,
        }
    }
}

pub const SYNTHETIC_COLUMNS: [&str; 8] = [
    "Player", "Team", "Position", "Hometown", "College", "Seasons", "Draft", "Points",
];

const FIRST: [&str; 24] = [
    "James", "Maria", "Robert", "Aisha", "Chen", "Olga", "Diego", "Fatima", "Liam", "Noor",
    "Kofi", "Ines", "Tomas", "Yuki", "Marek", "Priya", "Andre", "Lena", "Omar", "Sofia", "Ivan",
    "Grace", "Mateo", "Hana",
];
const LAST: [&str; 24] = [
    "Walker", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Kowalski", "Reyes", "Haddad", "Novak",
    "Byrne", "Mensah", "Costa", "Fischer", "Ahmadi", "Larsen", "Duarte", "Petrov", "Quinn",
    "Sato", "Varga", "Nakamura", "Abbott", "Ferreira", "Holm",
];
const CITIES: [&str; 10] = [
    "Lake Forest", "Port Arthur", "New Haven", "Salt Creek", "Glen Falls", "Red Oak",
    "Bay Ridge", "Stone Mill", "East Point", "Cedar Rapids",
];
const MASCOTS: [&str; 6] = ["Falcons", "Wolves", "Comets", "Pioneers", "Rangers", "Hawks"];
const POSITIONS: [&str; 5] = [
    "point guard", "shooting guard", "small forward", "power forward", "center",
];
const STATES: [&str; 8] = ["Ohio", "Texas", "Maine", "Oregon", "Utah", "Iowa", "Georgia", "Idaho"];
const SCHOOLS: [&str; 8] = [
    "North Valley", "Saint Anselm", "West Coast", "Lakeshore Tech", "Hill Country", "Delta State",
    "Pine Ridge", "Grand Canyon",
];

fn synthetic_table<R: Rng>(rng: &mut R, id: String, rows: usize) -> Table {
    let mut names: Vec<(usize, usize)> = (0..FIRST.len())
        .flat_map(|f| (0..LAST.len()).map(move |l| (f, l)))
        .collect();
    names.shuffle(rng);
    let rows: Vec<Vec<String>> = names[..rows]
        .iter()
        .map(|&(f, l)| {
            let start = rng.random_range(1990..2015);
            vec![
                format!("{} {}", FIRST[f], LAST[l]),
                format!("{} {}", CITIES.choose(rng).unwrap(), MASCOTS.choose(rng).unwrap()),
                POSITIONS.choose(rng).unwrap().to_string(),
                format!("{}, {}", CITIES.choose(rng).unwrap(), STATES.choose(rng).unwrap()),
                format!("University of {}", SCHOOLS.choose(rng).unwrap()),
                format!("{start} - {}", start + rng.random_range(1..12)),
                format!("round {} pick {}", rng.random_range(1..3), rng.random_range(1..31)),
                rng.random_range(0..2500).to_string(),
            ]
        })
        .collect();
    Table::new(id, SYNTHETIC_COLUMNS.iter().map(|c| c.to_string()).collect(), rows)
        .expect("synthetic rows match the header")
}

/// Generates a deterministic dataset of player tables (about 20 whitespace
/// tokens per row, so the default 1024-token budget truncates tables past
/// roughly 45 rows).
///
/// Lookup questions read `what is the value of <col> where Player ==
/// '<name>'` and carry the gold filter `row['Player'] == '<name>'`. Count
/// questions read `how many rows have Position == '<pos>'` with gold filter
/// `row['Position'] == '<pos>'`.
pub fn synthetic_dataset(config: &SyntheticConfig) -> Vec<QAInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let max = config.max_rows.clamp(1, FIRST.len() * LAST.len());
    let min = config.min_rows.clamp(1, max);
    (0..config.instances)
        .map(|i| {
            let n = rng.random_range(min..=max);
            let table = synthetic_table(&mut rng, format!("synthetic-{i:04}"), n);
            let id = format!("syn-{i:04}");
            if rng.random_bool(config.count_fraction.clamp(0.0, 1.0)) {
                let position = table.rows()[rng.random_range(0..n)][2].clone();
                let count = table.rows().iter().filter(|r| r[2] == position).count();
                QAInstance {
                    id,
                    question: format!("how many rows have Position == '{position}'?"),
                    gold_answers: vec![count.to_string()],
                    gold_predicate: Some(Expr::compare(
                        CmpOp::Eq,
                        Expr::column("Position"),
                        Expr::str(&position),
                    )),
                    table,
                }
            } else {
                let row = &table.rows()[rng.random_range(0..n)];
                let target = rng.random_range(1..SYNTHETIC_COLUMNS.len());
                let name = row[0].clone();
                let answer = row[target].clone();
                QAInstance {
                    id,
                    question: format!(
                        "what is the value of {} where Player == '{name}'",
                        SYNTHETIC_COLUMNS[target]
                    ),
                    gold_answers: vec![answer],
                    gold_predicate: Some(Expr::compare(
                        CmpOp::Eq,
                        Expr::column("Player"),
                        Expr::str(&name),
                    )),
                    table,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{count_tokens, linearize, DEFAULT_BUDGET_TOKENS};

    #[test]
    fn wtq_escapes() {
        assert_eq!(unescape_wtq(r"a\nb\pc\\d"), "a\nb|c\\d");
        assert_eq!(split_targets(r"a|b\pc"), vec!["a", "b|c"]);
    }

    #[test]
    fn synthetic_is_deterministic_and_well_formed() {
        let cfg = SyntheticConfig {
            instances: 30,
            ..SyntheticConfig::default()
        };
        let a = synthetic_dataset(&cfg);
        assert_eq!(a, synthetic_dataset(&cfg));
        for inst in &a {
            let n = inst.table.num_rows();
            assert!((5..=100).contains(&n));
            let names: std::collections::HashSet<_> = inst.table.rows().iter().map(|r| &r[0]).collect();
            assert_eq!(names.len(), n);
            assert!(inst.gold_predicate.is_some());
        }
    }

    #[test]
    fn synthetic_rows_truncate_near_45() {
        let cfg = SyntheticConfig {
            instances: 1,
            min_rows: 100,
            max_rows: 100,
            ..SyntheticConfig::default()
        };
        let inst = &synthetic_dataset(&cfg)[0];
        let lin = linearize(&inst.question, &inst.table, DEFAULT_BUDGET_TOKENS);
        assert!(lin.truncated);
        assert!((35..=60).contains(&lin.rows_kept), "kept {}", lin.rows_kept);
        assert!(count_tokens(&lin.text) <= DEFAULT_BUDGET_TOKENS);
    }
}
