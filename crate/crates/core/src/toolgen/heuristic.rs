//! Deterministic rule-based filter generation.
//!
//! Picks the longest quoted or capitalized span of the question, finds the
//! column whose cells or header best match it, and emits
//! `'<needle>' in lower(row['<column>'])`. Questions with no matching span
//! get the tautology `true`.

use std::sync::OnceLock;

use regex::Regex;

use crate::filter::{Expr, Func};
use crate::table::Table;

const QUESTION_WORDS: [&str; 14] = [
    "Who", "What", "Which", "When", "Where", "Why", "How", "In", "On", "Is", "Are", "Was", "Did",
    "Does",
];

const STOPWORDS: [&str; 12] = [
    "the", "and", "for", "with", "from", "that", "this", "are", "was", "were", "of", "in",
];

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#""([^"]+)"|(?:^|[\s(])'([^']+)'(?:$|[\s?.,!;:)])"#).expect("valid regex")
    })
}

/// Candidate search terms in question order.
pub fn candidate_terms(question: &str) -> Vec<String> {
    let mut terms = Vec::new();
    for caps in quoted_re().captures_iter(question) {
        if let Some(m) = caps.get(1).or_else(|| caps.get(2)) {
            let t = m.as_str().trim();
            if !t.is_empty() {
                terms.push(t.to_string());
            }
        }
    }

    let mut run: Vec<&str> = Vec::new();
    let tokens: Vec<&str> = question.split_whitespace().collect();
    for (idx, raw) in tokens.iter().enumerate() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capitalized = word.chars().next().is_some_and(char::is_uppercase)
            && !raw.starts_with(['\'', '"'])
            && !(idx == 0 && QUESTION_WORDS.contains(&word))
            && word != "I";
        if capitalized {
            run.push(word);
        }
        let ends_run = !capitalized || raw.ends_with(|c: char| !c.is_alphanumeric());
        if ends_run && !run.is_empty() {
            terms.push(run.join(" "));
            run.clear();
        }
    }
    if !run.is_empty() {
        terms.push(run.join(" "));
    }
    terms
}

/// The longest candidate; the earliest wins ties.
pub fn select_term(question: &str) -> Option<String> {
    let mut best: Option<String> = None;
    for term in candidate_terms(question) {
        if best.as_ref().is_none_or(|b| term.chars().count() > b.chars().count()) {
            best = Some(term);
        }
    }
    best
}

fn content_words(term: &str) -> Vec<String> {
    term.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ColumnScore {
    full_matches: usize,
    header_words: usize,
    word_matches: usize,
}

impl ColumnScore {
    fn any(&self) -> bool {
        self.full_matches + self.header_words + self.word_matches > 0
    }
}

fn score_column(table: &Table, col: usize, term: &str, words: &[String]) -> ColumnScore {
    let header_tokens: Vec<String> = table.columns()[col]
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .collect();
    let mut score = ColumnScore {
        full_matches: 0,
        header_words: words.iter().filter(|w| header_tokens.contains(w)).count(),
        word_matches: 0,
    };
    for row in table.rows() {
        let cell = row[col].to_lowercase();
        if cell.contains(term) {
            score.full_matches += 1;
        }
        if words.iter().any(|w| cell.contains(w.as_str())) {
            score.word_matches += 1;
        }
    }
    score
}

/// Builds the heuristic predicate for a question over a table.
pub fn heuristic_predicate(question: &str, table: &Table) -> Expr {
    let Some(term) = select_term(question) else {
        return Expr::Bool(true);
    };
    let term = term.to_lowercase();
    let words = content_words(&term);

    let mut best: Option<(ColumnScore, usize)> = None;
    for col in 0..table.num_columns() {
        let score = score_column(table, col, &term, &words);
        if score.any() && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, col));
        }
    }
    let Some((score, col)) = best else {
        return Expr::Bool(true);
    };

    let needle = if score.full_matches > 0 {
        term
    } else {
        // Broadest useful needle: the longest word seen in the column, else
        // the longest word of the term.
        let mut by_len = words.clone();
        by_len.sort_by_key(|w| std::cmp::Reverse(w.chars().count()));
        by_len
            .iter()
            .find(|w| table.rows().iter().any(|r| r[col].to_lowercase().contains(w.as_str())))
            .or_else(|| by_len.first())
            .cloned()
            .unwrap_or(term)
    };
    // Access by position when the name is shadowed by a later duplicate.
    let column = if table.column_index(&table.columns()[col]) == Some(col) {
        Expr::Column(table.columns()[col].clone())
    } else {
        Expr::Position(col)
    };
    Expr::contains(Expr::Str(needle), Expr::call(Func::Lower, column))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::render_predicate;

    fn players() -> Table {
        Table::from_strs(
            "players",
            &["Player", "No.", "Nationality", "Position", "Years in Toronto", "School/Club Team"],
            &[
                &["Jarrett Jack", "1", "United States", "Guard", "2009-10", "Georgia Tech"],
                &["Jermaine Jackson", "8", "United States", "Guard", "2002-03", "Detroit"],
            ],
        )
    }

    #[test]
    fn capitalized_runs_and_quotes() {
        assert_eq!(
            candidate_terms("who are all of the players on the Westchester High School club team?"),
            vec!["Westchester High School".to_string()]
        );
        assert_eq!(
            candidate_terms("Which team did Sri Lanka play in \"World Cup 2011\"?"),
            vec!["World Cup 2011".to_string(), "Sri Lanka".to_string(), "Cup".to_string()]
        );
    }

    #[test]
    fn westchester_header_match() {
        // Term "westchester high school": no cell contains any of its words;
        // "school" appears in the header tokens {school, club, team}, so that
        // column wins with header_words = 1, and the needle falls back to the
        // longest term word.
        let expr = heuristic_predicate(
            "who are all of the players on the Westchester High School club team?",
            &players(),
        );
        assert_eq!(
            render_predicate(&expr),
            "'westchester' in lower(row['School/Club Team'])"
        );
    }

    #[test]
    fn cell_match_uses_full_term() {
        let expr = heuristic_predicate("what number did Jarrett Jack wear?", &players());
        assert_eq!(render_predicate(&expr), "'jarrett jack' in lower(row['Player'])");
    }

    #[test]
    fn no_term_gives_tautology() {
        assert_eq!(heuristic_predicate("how many players participated?", &players()), Expr::Bool(true));
        assert_eq!(heuristic_predicate("Who scored Zebra points?", &players()), Expr::Bool(true));
    }

    #[test]
    fn shadowed_duplicate_uses_position() {
        let t = Table::from_strs("d", &["Team", "Team"], &[&["Lions", "x"], &["Bears", "y"]]);
        let expr = heuristic_predicate("when did the Lions win?", &t);
        assert_eq!(render_predicate(&expr), "'lions' in lower(row[#0])");
    }
}
