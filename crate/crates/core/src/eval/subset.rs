//! The filter subset: instances whose annotated SQL is a single `SELECT`
//! with a `WHERE` clause, paired with the translated gold predicate.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::filter::{translate_sql_where, ColumnMap};

use super::data::{LoadError, QAInstance};

/// Subset size reported for the WikiTableQuestions dev annotations.
pub const REFERENCE_SUBSET_SIZE: usize = 1256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlAnnotation {
    pub id: String,
    pub sql: String,
}

/// Reads annotations from a JSON array or JSONL. Each record names the
/// instance with `nt` or `id`; `sql` is a string, an array of tokens, or an
/// array of `[type, value, ...]` token tuples.
pub fn load_annotations(path: &Path) -> Result<Vec<SqlAnnotation>, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format_err = |message: String| LoadError::Format {
        path: path.to_path_buf(),
        message,
    };
    let values: Vec<Value> = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items,
        _ => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(e.to_string()))?,
    };
    values
        .iter()
        .map(|v| {
            let id = v
                .get("nt")
                .or_else(|| v.get("id"))
                .and_then(Value::as_str)
                .ok_or_else(|| format_err("annotation without nt/id".into()))?;
            let sql = v
                .get("sql")
                .and_then(sql_text)
                .ok_or_else(|| format_err(format!("annotation {id} has no usable sql")))?;
            Ok(SqlAnnotation {
                id: id.to_string(),
                sql,
            })
        })
        .collect()
}

fn sql_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(tokens) => tokens
            .iter()
            .map(|t| match t {
                Value::String(s) => Some(s.clone()),
                Value::Array(parts) => parts.get(1).and_then(Value::as_str).map(String::from),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|parts| parts.join(" ")),
        _ => None,
    }
}

const CLAUSE_END: [&str; 8] = [
    "order", "group", "limit", "having", "union", "intersect", "except", ";",
];

/// Lowercased words outside string literals, with their byte offsets and
/// parenthesis depth.
fn words(sql: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut start: Option<usize> = None;
    let flush = |start: &mut Option<usize>, end: usize, depth: usize, out: &mut Vec<_>| {
        if let Some(s) = start.take() {
            out.push((sql[s..end].to_lowercase(), s, depth));
        }
    };
    for (i, c) in sql.char_indices() {
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' | '`' => {
                flush(&mut start, i, depth, &mut out);
                quote = Some(c);
            }
            '(' => {
                flush(&mut start, i, depth, &mut out);
                depth += 1;
            }
            ')' => {
                flush(&mut start, i, depth, &mut out);
                depth = depth.saturating_sub(1);
            }
            ';' => {
                flush(&mut start, i, depth, &mut out);
                out.push((";".into(), i, depth));
            }
            c if c.is_alphanumeric() || c == '_' => {
                start.get_or_insert(i);
            }
            _ => flush(&mut start, i, depth, &mut out),
        }
    }
    flush(&mut start, sql.len(), depth, &mut out);
    out
}

/// The `WHERE` body of a single-`SELECT` query, or `None` when the query has
/// no top-level `WHERE` or more than one `SELECT`.
pub fn where_clause(sql: &str) -> Option<&str> {
    let words = words(sql);
    if words.iter().filter(|(w, ..)| w == "select").count() != 1 {
        return None;
    }
    let select = words.iter().position(|(w, _, d)| w == "select" && *d == 0)?;
    let at = words[select..]
        .iter()
        .position(|(w, _, d)| w == "where" && *d == 0)?
        + select;
    let body_start = words[at].1 + "where".len();
    let body_end = words[at + 1..]
        .iter()
        .find(|(w, _, d)| *d == 0 && CLAUSE_END.contains(&w.as_str()))
        .map(|(_, pos, _)| *pos)
        .unwrap_or(sql.len());
    let body = sql[body_start..body_end].trim();
    (!body.is_empty()).then_some(body)
}

#[derive(Debug, Clone, Default)]
pub struct SubsetReport {
    pub instances: Vec<QAInstance>,
    /// Kept instances whose clause could not be translated.
    pub untranslatable: Vec<(String, String)>,
    pub excluded: usize,
    pub unannotated: usize,
}

/// Keeps instances with a single-`SELECT` `WHERE` annotation and attaches
/// the translated predicate when translation succeeds.
pub fn build_filter_subset(instances: &[QAInstance], annotations: &[SqlAnnotation]) -> SubsetReport {
    let by_id: HashMap<&str, &SqlAnnotation> =
        annotations.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut report = SubsetReport::default();
    for instance in instances {
        let Some(annotation) = by_id.get(instance.id.as_str()) else {
            report.unannotated += 1;
            continue;
        };
        let Some(body) = where_clause(&annotation.sql) else {
            report.excluded += 1;
            continue;
        };
        let mut kept = instance.clone();
        match translate_sql_where(body, &ColumnMap::for_header(instance.table.columns())) {
            Ok(predicate) => kept.gold_predicate = Some(predicate),
            Err(e) => {
                kept.gold_predicate = None;
                report.untranslatable.push((instance.id.clone(), e.to_string()));
            }
        }
        report.instances.push(kept);
    }
    report
}
