use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{CmpOp, Expr, Func};
use super::render::format_number;

/// Per-row evaluation budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalLimits {
    pub max_steps_per_row: u64,
    pub max_string_length: usize,
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits {
            max_steps_per_row: 10_000,
            max_string_length: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no column named {0:?}")]
    MissingColumn(String),
    #[error("column position {index} out of range for {width} columns")]
    PositionOutOfRange { index: usize, width: usize },
    #[error("cannot convert {0:?} to float")]
    NotANumber(String),
    #[error("cannot order {lhs} {op} {rhs}")]
    OrderingTypeMismatch {
        op: &'static str,
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(u64),
    #[error("string longer than {0} characters")]
    StringTooLong(usize),
    #[error("expression nested deeper than {0} levels")]
    TooDeep(usize),
}

impl EvalError {
    /// Whether the error comes from a resource limit rather than the data.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            EvalError::StepBudgetExceeded(_) | EvalError::StringTooLong(_) | EvalError::TooDeep(_)
        )
    }
}

/// Name and position lookup for the cells of one row.
///
/// When a header repeats a name, the last occurrence wins.
#[derive(Debug, Clone)]
pub struct RowBinding<'a> {
    by_name: HashMap<&'a str, &'a str>,
    cells: &'a [String],
}

impl<'a> RowBinding<'a> {
    pub fn new(columns: &'a [String], cells: &'a [String]) -> Self {
        let by_name = columns
            .iter()
            .zip(cells)
            .map(|(name, cell)| (name.as_str(), cell.as_str()))
            .collect();
        RowBinding { by_name, cells }
    }

    pub fn get(&self, name: &str) -> Option<&'a str> {
        self.by_name.get(name).copied()
    }

    pub fn get_position(&self, index: usize) -> Option<&'a str> {
        self.cells.get(index).map(String::as_str)
    }

    pub fn width(&self) -> usize {
        self.cells.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Num(_) => "number",
            Value::Bool(_) => "bool",
        }
    }

    /// Truthiness follows the host-language convention: empty strings and
    /// zero are false.
    pub fn truthy(&self) -> bool {
        match self {
            Value::Str(s) => !s.is_empty(),
            Value::Num(n) => *n != 0.0,
            Value::Bool(b) => *b,
        }
    }

    pub fn into_text(self) -> String {
        match self {
            Value::Str(s) => s,
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Num(n) => f.write_str(&format_number(*n)),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Evaluates `expr` against one row and returns its truthiness.
pub fn eval_predicate(
    expr: &Expr,
    row: &RowBinding<'_>,
    limits: &EvalLimits,
) -> Result<bool, EvalError> {
    Evaluator::new(row, limits).eval(expr).map(|v| v.truthy())
}

/// Like [`eval_predicate`] but also reports the number of nodes visited.
pub fn eval_predicate_counted(
    expr: &Expr,
    row: &RowBinding<'_>,
    limits: &EvalLimits,
) -> (Result<bool, EvalError>, u64) {
    let mut ev = Evaluator::new(row, limits);
    let result = ev.eval(expr).map(|v| v.truthy());
    (result, ev.steps)
}

/// Evaluates `expr` to a value without coercing to boolean.
pub fn eval_value(expr: &Expr, row: &RowBinding<'_>, limits: &EvalLimits) -> Result<Value, EvalError> {
    Evaluator::new(row, limits).eval(expr)
}

/// Recursion limit for trees built programmatically rather than parsed.
pub const MAX_EVAL_DEPTH: usize = 512;

struct Evaluator<'r, 'a> {
    row: &'r RowBinding<'a>,
    limits: &'r EvalLimits,
    steps: u64,
    depth: usize,
}

impl<'r, 'a> Evaluator<'r, 'a> {
    fn new(row: &'r RowBinding<'a>, limits: &'r EvalLimits) -> Self {
        Evaluator {
            row,
            limits,
            steps: 0,
            depth: 0,
        }
    }

    fn tick(&mut self) -> Result<(), EvalError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps_per_row {
            return Err(EvalError::StepBudgetExceeded(self.limits.max_steps_per_row));
        }
        Ok(())
    }

    fn check_len(&self, s: String) -> Result<Value, EvalError> {
        if s.len() > self.limits.max_string_length
            && s.chars().count() > self.limits.max_string_length
        {
            return Err(EvalError::StringTooLong(self.limits.max_string_length));
        }
        Ok(Value::Str(s))
    }

    fn eval(&mut self, expr: &Expr) -> Result<Value, EvalError> {
        self.tick()?;
        if self.depth >= MAX_EVAL_DEPTH {
            return Err(EvalError::TooDeep(MAX_EVAL_DEPTH));
        }
        self.depth += 1;
        let result = self.eval_node(expr);
        self.depth -= 1;
        result
    }

    fn eval_node(&mut self, expr: &Expr) -> Result<Value, EvalError> {
        match expr {
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Num(n) => Ok(Value::Num(*n)),
            Expr::Str(s) => self.check_len(s.clone()),
            Expr::Column(name) => match self.row.get(name) {
                Some(cell) => self.check_len(cell.to_string()),
                None => Err(EvalError::MissingColumn(name.clone())),
            },
            Expr::Position(index) => match self.row.get_position(*index) {
                Some(cell) => self.check_len(cell.to_string()),
                None => Err(EvalError::PositionOutOfRange {
                    index: *index,
                    width: self.row.width(),
                }),
            },
            Expr::Not(inner) => Ok(Value::Bool(!self.eval(inner)?.truthy())),
            Expr::And(lhs, rhs) => {
                if !self.eval(lhs)?.truthy() {
                    return Ok(Value::Bool(false));
                }
                Ok(Value::Bool(self.eval(rhs)?.truthy()))
            }
            Expr::Or(lhs, rhs) => {
                if self.eval(lhs)?.truthy() {
                    return Ok(Value::Bool(true));
                }
                Ok(Value::Bool(self.eval(rhs)?.truthy()))
            }
            Expr::In(needle, haystack) => {
                let needle = self.eval(needle)?.into_text();
                let haystack = self.eval(haystack)?.into_text();
                Ok(Value::Bool(haystack.contains(&needle)))
            }
            Expr::Compare(op, lhs, rhs) => {
                let lhs = self.eval(lhs)?;
                let rhs = self.eval(rhs)?;
                compare(*op, &lhs, &rhs).map(Value::Bool)
            }
            Expr::Call(func, arg) => {
                let arg = self.eval(arg)?;
                match func {
                    Func::Lower => self.check_len(arg.into_text().to_lowercase()),
                    Func::Float => to_float(arg).map(Value::Num),
                    Func::Len => Ok(Value::Num(arg.into_text().chars().count() as f64)),
                }
            }
        }
    }
}

fn to_float(value: Value) -> Result<f64, EvalError> {
    match value {
        Value::Num(n) => Ok(n),
        Value::Bool(b) => Ok(if b { 1.0 } else { 0.0 }),
        Value::Str(s) => parse_float_strict(&s).ok_or(EvalError::NotANumber(s)),
    }
}

/// Parses the whole trimmed text as a decimal number.
///
/// Accepts an optional sign, digits with an optional fraction, an exponent,
/// and the special values `inf`/`nan`. Anything else (including thousands
/// separators or trailing words) is rejected.
pub fn parse_float_strict(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let unsigned = t.strip_prefix(['+', '-']).unwrap_or(t);
    let lowered = unsigned.to_ascii_lowercase();
    if matches!(lowered.as_str(), "inf" | "infinity" | "nan") {
        return t.parse::<f64>().ok();
    }
    if !unsigned
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-'))
    {
        return None;
    }
    t.parse::<f64>().ok()
}

fn compare(op: CmpOp, lhs: &Value, rhs: &Value) -> Result<bool, EvalError> {
    use std::cmp::Ordering;
    let ordering: Option<Ordering> = match (lhs, rhs) {
        (Value::Num(a), Value::Num(b)) => a.partial_cmp(b),
        (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
        (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
        _ => {
            if op.is_ordering() {
                return Err(EvalError::OrderingTypeMismatch {
                    op: op.symbol(),
                    lhs: lhs.type_name(),
                    rhs: rhs.type_name(),
                });
            }
            // Mixed-type equality is simply false.
            return Ok(op == CmpOp::Ne);
        }
    };
    // NaN compares unequal and unordered with everything.
    let Some(ord) = ordering else {
        return Ok(op == CmpOp::Ne);
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}
