//! Exact-match scoring.

use std::sync::LazyLock;

use regex::Regex;

/// Identifies the normalization rules; stored in reports.
pub const EM_VERSION: &str = "em-v1: trim, lowercase, collapse spaces, strip quotes, numeric tol 1e-6, '|' multiset";

/// Separator between items of a multi-answer prediction.
pub const ANSWER_SEPARATOR: char = '|';

const NUMERIC_TOLERANCE: f64 = 1e-6;

static THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").unwrap());

/// Trims, lowercases, collapses internal whitespace and strips surrounding
/// quotes.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut s = collapsed.as_str();
    loop {
        let stripped = ['"', '\''].iter().find_map(|q| {
            s.strip_prefix(*q)
                .and_then(|rest| rest.strip_suffix(*q))
                .map(str::trim)
        });
        match stripped {
            Some(inner) => s = inner,
            None => break,
        }
    }
    s.to_string()
}

/// The numeric value of a normalized answer, if it is entirely a number.
pub fn numeric_value(normalized: &str) -> Option<f64> {
    if !normalized.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let plain = if THOUSANDS.is_match(normalized) {
        normalized.replace(',', "")
    } else {
        normalized.to_string()
    };
    plain.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Equality of two single answers after normalization.
pub fn answers_match(predicted: &str, gold: &str) -> bool {
    let (p, g) = (normalize_answer(predicted), normalize_answer(gold));
    match (numeric_value(&p), numeric_value(&g)) {
        (Some(a), Some(b)) => (a - b).abs() <= NUMERIC_TOLERANCE,
        _ => p == g,
    }
}

/// `true` iff the `|`-separated prediction matches the gold answers as a
/// multiset.
pub fn exact_match(predicted: &str, gold_answers: &[String]) -> bool {
    if gold_answers.is_empty() {
        return false;
    }
    let items: Vec<&str> = predicted.split(ANSWER_SEPARATOR).collect();
    if items.len() != gold_answers.len() {
        return false;
    }
    let mut used = vec![false; gold_answers.len()];
    for item in items {
        let slot = gold_answers
            .iter()
            .enumerate()
            .position(|(i, g)| !used[i] && answers_match(item, g));
        match slot {
            Some(i) => used[i] = true,
            None => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert!(exact_match("Paris ", &gold(&["paris"])));
        assert!(exact_match("  New   York ", &gold(&["new york"])));
        assert!(exact_match("'Paris'", &gold(&["\"paris\""])));
        assert!(!exact_match("Paris", &gold(&["London"])));
    }

    #[test]
    fn numbers() {
        assert!(exact_match("2,000", &gold(&["2000"])));
        assert!(exact_match("3.0", &gold(&["3"])));
        assert!(exact_match("1,234,567.5", &gold(&["1234567.5000001"])));
        assert!(!exact_match("2,00", &gold(&["200"])));
        assert_eq!(numeric_value("nan"), None);
        assert_eq!(numeric_value("inf"), None);
        assert!(!exact_match("3", &gold(&["3.1"])));
    }

    #[test]
    fn multisets() {
        assert!(exact_match("a|b", &gold(&["b", "a"])));
        assert!(!exact_match("a", &gold(&["a", "b"])));
        assert!(!exact_match("a|a", &gold(&["a", "b"])));
        assert!(exact_match("a|a", &gold(&["a", "a"])));
        assert!(!exact_match("a", &[]));
    }
}
