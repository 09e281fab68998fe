use super::ast::Expr;

const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ATOM: u8 = 5;

/// Renders the canonical source text for a predicate.
///
/// Only the parentheses required to rebuild the same tree are emitted, so
/// `parse_predicate(&render_predicate(e)) == Ok(e)` for every finite tree.
pub fn render_predicate(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(expr, 0, &mut out);
    out
}

fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Or(..) => PREC_OR,
        Expr::And(..) => PREC_AND,
        Expr::Not(_) => PREC_NOT,
        Expr::Compare(..) | Expr::In(..) => PREC_CMP,
        _ => PREC_ATOM,
    }
}

fn write_expr(expr: &Expr, min_prec: u8, out: &mut String) {
    let wrap = precedence(expr) < min_prec;
    if wrap {
        out.push('(');
    }
    match expr {
        Expr::Bool(true) => out.push_str("true"),
        Expr::Bool(false) => out.push_str("false"),
        Expr::Str(s) => write_string(s, out),
        Expr::Num(n) => out.push_str(&format_number(*n)),
        Expr::Column(name) => {
            out.push_str("row[");
            write_string(name, out);
            out.push(']');
        }
        Expr::Position(idx) => {
            out.push_str("row[#");
            out.push_str(&idx.to_string());
            out.push(']');
        }
        Expr::Not(inner) => {
            out.push_str("not ");
            write_expr(inner, PREC_NOT, out);
        }
        Expr::And(lhs, rhs) => {
            write_expr(lhs, PREC_AND, out);
            out.push_str(" and ");
            write_expr(rhs, PREC_AND + 1, out);
        }
        Expr::Or(lhs, rhs) => {
            write_expr(lhs, PREC_OR, out);
            out.push_str(" or ");
            write_expr(rhs, PREC_OR + 1, out);
        }
        Expr::Compare(op, lhs, rhs) => {
            write_expr(lhs, PREC_ATOM, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(rhs, PREC_ATOM, out);
        }
        Expr::In(needle, haystack) => {
            write_expr(needle, PREC_ATOM, out);
            out.push_str(" in ");
            write_expr(haystack, PREC_ATOM, out);
        }
        Expr::Call(func, arg) => {
            out.push_str(func.name());
            out.push('(');
            write_expr(arg, 0, out);
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub(crate) fn format_number(n: f64) -> String {
    format!("{n}")
}

fn write_string(s: &str, out: &mut String) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}
