//! Random predicate generation for round-trip property checks.

use rand::Rng;

use super::ast::{CmpOp, Expr, Func};
use super::{parse_predicate, render_predicate};

const CHAR_POOL: &[char] = &[
    'a', 'b', 'Z', '0', '7', ' ', '\'', '"', '\\', '\n', '\t', '\r', 'é', '中', '/', '.', '(', ')',
    '[', ']', '#', ',', '-',
];

fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| CHAR_POOL[rng.random_range(0..CHAR_POOL.len())])
        .collect()
}

fn random_number<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..5) {
        0 => rng.random_range(0..1000) as f64,
        1 => rng.random_range(-1000.0..1000.0),
        2 => rng.random_range(-1e-3..1e-3),
        3 => rng.random_range(-1e30..1e30),
        _ => -(rng.random_range(0..50) as f64),
    }
}

/// Generates a random predicate tree of at most `depth` levels.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..5) {
            0 => Expr::Bool(rng.random_bool(0.5)),
            1 => Expr::Str(random_text(rng, 6)),
            2 => Expr::Num(random_number(rng)),
            3 => Expr::Column(random_text(rng, 8)),
            _ => Expr::Position(rng.random_range(0..12)),
        };
    }
    let d = depth - 1;
    match rng.random_range(0..6) {
        0 => Expr::not(random_expr(rng, d)),
        1 => Expr::and(random_expr(rng, d), random_expr(rng, d)),
        2 => Expr::or(random_expr(rng, d), random_expr(rng, d)),
        3 => {
            let op = CmpOp::ALL[rng.random_range(0..CmpOp::ALL.len())];
            Expr::compare(op, random_expr(rng, d), random_expr(rng, d))
        }
        4 => Expr::contains(random_expr(rng, d), random_expr(rng, d)),
        _ => {
            let func = Func::ALL[rng.random_range(0..Func::ALL.len())];
            Expr::call(func, random_expr(rng, d))
        }
    }
}

/// Generates valid source text that exercises the completion dialect:
/// redundant parentheses, `row_dict`, `.lower()` method calls, `True`/`False`,
/// `not in`, double-quoted strings and irregular whitespace.
pub fn random_source<R: Rng>(rng: &mut R, depth: usize) -> String {
    let mut out = String::new();
    let expr = random_expr(rng, depth);
    write_dialect(rng, &expr, 0, &mut out);
    out
}

fn ws<R: Rng>(rng: &mut R) -> &'static str {
    match rng.random_range(0..4) {
        0 => "  ",
        1 => "\t",
        _ => " ",
    }
}

fn quote<R: Rng>(rng: &mut R, s: &str) -> String {
    let q = if rng.random_bool(0.5) { '\'' } else { '"' };
    let mut out = String::new();
    out.push(q);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

// Always parenthesizes compound children, so the text parses regardless of
// precedence; the redundant groups are part of what is being exercised.
fn write_dialect<R: Rng>(rng: &mut R, expr: &Expr, level: usize, out: &mut String) {
    let row = if rng.random_bool(0.5) { "row" } else { "row_dict" };
    match expr {
        Expr::Bool(b) => {
            let text = match (b, rng.random_bool(0.5)) {
                (true, true) => "True",
                (true, false) => "true",
                (false, true) => "False",
                (false, false) => "false",
            };
            out.push_str(text);
        }
        Expr::Str(s) => out.push_str(&quote(rng, s)),
        Expr::Num(n) => out.push_str(&format!("{n}")),
        Expr::Column(name) => {
            out.push_str(row);
            out.push('[');
            out.push_str(&quote(rng, name));
            out.push(']');
        }
        Expr::Position(idx) => out.push_str(&format!("{row}[#{idx}]")),
        Expr::Not(inner) => {
            if let Expr::In(needle, haystack) = inner.as_ref() {
                if rng.random_bool(0.5) {
                    group(rng, needle, level, out);
                    out.push_str(ws(rng));
                    out.push_str("not in");
                    out.push_str(ws(rng));
                    group(rng, haystack, level, out);
                    return;
                }
            }
            out.push_str("not");
            out.push_str(ws(rng));
            group(rng, inner, level, out);
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            let word = if matches!(expr, Expr::And(..)) { "and" } else { "or" };
            group(rng, a, level, out);
            out.push_str(ws(rng));
            out.push_str(word);
            out.push_str(ws(rng));
            group(rng, b, level, out);
        }
        Expr::Compare(op, a, b) => {
            group(rng, a, level, out);
            out.push_str(ws(rng));
            out.push_str(op.symbol());
            out.push_str(ws(rng));
            group(rng, b, level, out);
        }
        Expr::In(a, b) => {
            group(rng, a, level, out);
            out.push_str(ws(rng));
            out.push_str("in");
            out.push_str(ws(rng));
            group(rng, b, level, out);
        }
        Expr::Call(Func::Lower, arg) if rng.random_bool(0.5) => {
            group(rng, arg, level, out);
            out.push_str(".lower()");
        }
        Expr::Call(func, arg) => {
            out.push_str(func.name());
            out.push('(');
            write_dialect(rng, arg, level + 1, out);
            out.push(')');
        }
    }
}

fn group<R: Rng>(rng: &mut R, expr: &Expr, level: usize, out: &mut String) {
    let compound = matches!(
        expr,
        Expr::Not(_) | Expr::And(..) | Expr::Or(..) | Expr::Compare(..) | Expr::In(..)
    );
    // Negative literals need grouping before a `.lower()` suffix.
    let negative = matches!(expr, Expr::Num(n) if n.is_sign_negative());
    if compound || negative || rng.random_bool(0.1) {
        out.push('(');
        write_dialect(rng, expr, level + 1, out);
        out.push(')');
    } else {
        write_dialect(rng, expr, level + 1, out);
    }
}

/// Outcome of a round-trip fuzz campaign.
#[derive(Debug, Clone, Default)]
pub struct FuzzSummary {
    pub trees_checked: usize,
    pub sources_checked: usize,
    pub failures: Vec<String>,
}

/// Checks `parse(render(t)) == t` for random trees and
/// `render(parse(s)) == render(parse(render(parse(s))))` for random sources.
pub fn run_round_trip<R: Rng>(rng: &mut R, cases: usize, depth: usize) -> FuzzSummary {
    let mut summary = FuzzSummary::default();
    for _ in 0..cases {
        let tree = random_expr(rng, depth);
        let text = render_predicate(&tree);
        match parse_predicate(&text) {
            Ok(back) if back == tree => {}
            Ok(back) => summary
                .failures
                .push(format!("tree mismatch: {text:?} reparsed as {back:?}")),
            Err(err) => summary.failures.push(format!("render not parseable: {text:?}: {err}")),
        }
        summary.trees_checked += 1;
    }
    for _ in 0..cases {
        let source = random_source(rng, depth);
        match parse_predicate(&source) {
            Ok(parsed) => {
                let once = render_predicate(&parsed);
                match parse_predicate(&once) {
                    Ok(again) if render_predicate(&again) == once => {}
                    Ok(again) => summary.failures.push(format!(
                        "render unstable for {source:?}: {once:?} vs {:?}",
                        render_predicate(&again)
                    )),
                    Err(err) => summary
                        .failures
                        .push(format!("render of {source:?} not parseable: {err}")),
                }
            }
            Err(err) => summary
                .failures
                .push(format!("generated source {source:?} rejected: {err}")),
        }
        summary.sources_checked += 1;
    }
    summary
}
