//! Translation of single-table SQL `WHERE` bodies into row predicates.
//!
//! Supported: `col <op> literal` (either operand order) for
//! `= != <> < <= > >=`, string and number literals, `AND`, `OR`, `NOT` and
//! parentheses. Numeric literals compare through `float(row[col])`; string
//! literals compare case-insensitively through `lower(row[col])` against the
//! lowercased literal.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{CmpOp, Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslateError {
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
}

/// Resolves SQL column identifiers to table header names.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    names: HashMap<String, String>,
}

impl ColumnMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sql_name: impl Into<String>, header: impl Into<String>) -> &mut Self {
        self.names.insert(sql_name.into().to_lowercase(), header.into());
        self
    }

    /// Maps annotation-style identifiers `c1, c2, ...` (1-based) and their
    /// typed variants such as `c2_number` onto the table header, plus every
    /// header name itself.
    pub fn for_header(header: &[String]) -> Self {
        let mut map = ColumnMap::new();
        for name in header {
            map.insert(name.clone(), name.clone());
        }
        for (idx, name) in header.iter().enumerate() {
            map.insert(format!("c{}", idx + 1), name.clone());
        }
        map
    }

    pub fn resolve(&self, ident: &str) -> Option<&str> {
        let key = ident.to_lowercase();
        if let Some(name) = self.names.get(&key) {
            return Some(name);
        }
        // `c3_number`, `c3_first` and friends refer to column c3.
        let base = key.split('_').next()?;
        if base.len() > 1 && base.starts_with('c') && base[1..].chars().all(|c| c.is_ascii_digit()) {
            return self.names.get(base).map(String::as_str);
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    LParen,
    RParen,
    Comma,
    Other(char),
    Eof,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, TranslateError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let syntax = |position: usize, message: &str| TranslateError::Syntax {
        position,
        message: message.to_string(),
    };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '=' => {
                i += 1;
                if chars.get(i).map(|p| p.1) == Some('=') {
                    i += 1;
                }
                Tok::Op(CmpOp::Eq)
            }
            '!' => {
                if chars.get(i + 1).map(|p| p.1) != Some('=') {
                    return Err(syntax(pos, "expected `!=`"));
                }
                i += 2;
                Tok::Op(CmpOp::Ne)
            }
            '<' | '>' => {
                let next = chars.get(i + 1).map(|p| p.1);
                i += 1;
                match (c, next) {
                    ('<', Some('=')) => {
                        i += 1;
                        Tok::Op(CmpOp::Le)
                    }
                    ('<', Some('>')) => {
                        i += 1;
                        Tok::Op(CmpOp::Ne)
                    }
                    ('>', Some('=')) => {
                        i += 1;
                        Tok::Op(CmpOp::Ge)
                    }
                    ('<', _) => Tok::Op(CmpOp::Lt),
                    _ => Tok::Op(CmpOp::Gt),
                }
            }
            '\'' => {
                // SQL strings escape a quote by doubling it.
                let mut value = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(pos, "unterminated string literal")),
                        Some((_, '\'')) if chars.get(i + 1).map(|p| p.1) == Some('\'') => {
                            value.push('\'');
                            i += 2;
                        }
                        Some((_, '\'')) => {
                            i += 1;
                            break;
                        }
                        Some((_, ch)) => {
                            value.push(*ch);
                            i += 1;
                        }
                    }
                }
                Tok::Str(value)
            }
            '"' | '`' | '[' => {
                let close = if c == '[' { ']' } else { c };
                let mut name = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(pos, "unterminated quoted identifier")),
                        Some((_, ch)) if *ch == close => {
                            i += 1;
                            break;
                        }
                        Some((_, ch)) => {
                            name.push(*ch);
                            i += 1;
                        }
                    }
                }
                Tok::Ident(name)
            }
            d if d.is_ascii_digit() || d == '.' || d == '-' || d == '+' => {
                let start = i;
                i += 1;
                while let Some((_, ch)) = chars.get(i) {
                    if ch.is_ascii_digit() || *ch == '.' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let end = chars.get(i).map_or(src.len(), |p| p.0);
                let text = &src[chars[start].0..end];
                match text.parse::<f64>() {
                    Ok(n) if n.is_finite() => Tok::Num(n),
                    _ => return Err(syntax(pos, "malformed number")),
                }
            }
            a if a.is_alphabetic() || a == '_' => {
                let start = i;
                while let Some((_, ch)) = chars.get(i) {
                    if ch.is_alphanumeric() || *ch == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let end = chars.get(i).map_or(src.len(), |p| p.0);
                Tok::Ident(src[chars[start].0..end].to_string())
            }
            other => {
                i += 1;
                Tok::Other(other)
            }
        };
        out.push((tok, pos));
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

const UNSUPPORTED_KEYWORDS: [&str; 12] = [
    "select", "in", "like", "between", "is", "exists", "case", "from", "join", "group", "order",
    "limit",
];

/// Translates a `WHERE` body such as `c3 = 'France' AND c2 > 10`.
pub fn translate_sql_where(where_text: &str, columns: &ColumnMap) -> Result<Expr, TranslateError> {
    let tokens = lex(where_text)?;
    let mut tr = Translator {
        tokens,
        cursor: 0,
        columns,
    };
    let expr = tr.parse_or()?;
    match tr.peek() {
        Tok::Eof => Ok(expr),
        _ => Err(tr.unexpected()),
    }
}

struct Translator<'c> {
    tokens: Vec<(Tok, usize)>,
    cursor: usize,
    columns: &'c ColumnMap,
}

enum Operand {
    Column(String),
    Str(String),
    Num(f64),
}

impl Translator<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.cursor].0
    }

    fn pos(&self) -> usize {
        self.tokens[self.cursor].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.cursor].0.clone();
        if self.cursor < self.tokens.len() - 1 {
            self.cursor += 1;
        }
        tok
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(i) if i.eq_ignore_ascii_case(word))
    }

    fn unexpected(&self) -> TranslateError {
        match self.peek() {
            Tok::Ident(word) if UNSUPPORTED_KEYWORDS.contains(&word.to_lowercase().as_str()) => {
                TranslateError::Unsupported(word.to_uppercase())
            }
            Tok::Comma => TranslateError::Unsupported("list".into()),
            tok => TranslateError::Syntax {
                position: self.pos(),
                message: format!("unexpected {tok:?}"),
            },
        }
    }

    fn parse_or(&mut self) -> Result<Expr, TranslateError> {
        let mut lhs = self.parse_and()?;
        while self.keyword("or") {
            self.bump();
            lhs = Expr::or(lhs, self.parse_and()?);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, TranslateError> {
        let mut lhs = self.parse_not()?;
        while self.keyword("and") {
            self.bump();
            lhs = Expr::and(lhs, self.parse_not()?);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr, TranslateError> {
        if self.keyword("not") {
            self.bump();
            return Ok(Expr::not(self.parse_not()?));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<Expr, TranslateError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            if self.keyword("select") {
                return Err(TranslateError::Unsupported("subquery".into()));
            }
            let inner = self.parse_or()?;
            if *self.peek() != Tok::RParen {
                return Err(self.unexpected());
            }
            self.bump();
            return Ok(inner);
        }
        let lhs = self.parse_operand()?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            _ => return Err(self.unexpected()),
        };
        self.bump();
        let rhs = self.parse_operand()?;
        match (lhs, rhs) {
            (Operand::Column(col), lit @ (Operand::Str(_) | Operand::Num(_))) => {
                Ok(comparison(op, col, lit))
            }
            (lit @ (Operand::Str(_) | Operand::Num(_)), Operand::Column(col)) => {
                Ok(comparison(op.flipped(), col, lit))
            }
            (Operand::Column(_), Operand::Column(_)) => {
                Err(TranslateError::Unsupported("column-to-column comparison".into()))
            }
            _ => Err(TranslateError::Unsupported("literal-to-literal comparison".into())),
        }
    }

    fn parse_operand(&mut self) -> Result<Operand, TranslateError> {
        let tok = self.peek().clone();
        match tok {
            Tok::Str(s) => {
                self.bump();
                Ok(Operand::Str(s))
            }
            Tok::Num(n) => {
                self.bump();
                Ok(Operand::Num(n))
            }
            Tok::Ident(name) => {
                let lowered = name.to_lowercase();
                if UNSUPPORTED_KEYWORDS.contains(&lowered.as_str())
                    || matches!(lowered.as_str(), "and" | "or" | "not")
                {
                    return Err(self.unexpected());
                }
                self.bump();
                if *self.peek() == Tok::LParen {
                    return Err(TranslateError::Unsupported(format!("function {name}")));
                }
                match self.columns.resolve(&name) {
                    Some(header) => Ok(Operand::Column(header.to_string())),
                    None => Err(TranslateError::UnknownColumn(name)),
                }
            }
            Tok::LParen => Err(TranslateError::Unsupported("parenthesized operand".into())),
            _ => Err(self.unexpected()),
        }
    }
}

fn comparison(op: CmpOp, column: String, literal: Operand) -> Expr {
    match literal {
        Operand::Num(n) => Expr::compare(op, Expr::call(Func::Float, Expr::Column(column)), Expr::Num(n)),
        Operand::Str(s) => Expr::compare(
            op,
            Expr::call(Func::Lower, Expr::Column(column)),
            Expr::Str(s.to_lowercase()),
        ),
        Operand::Column(_) => unreachable!("literal operand expected"),
    }
}
