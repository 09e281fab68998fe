use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("completion contains no expression")]
    NoExpression,
    #[error("unbalanced {0} in completion")]
    Unbalanced(&'static str),
}

const LAMBDA_HEAD: &str = "lambda row_dict:";

/// Slices the predicate body out of a completion.
///
/// If the completion repeats the scaffold, only the text after the last
/// `lambda row_dict:` is considered. The scan tracks brackets and quotes and
/// stops at the first top-level `,` (the start of `, axis=1)]`), an unmatched
/// closing bracket, or a top-level newline.
pub fn extract_filter_source(completion: &str) -> Result<String, ExtractError> {
    let body = match completion.rfind(LAMBDA_HEAD) {
        Some(idx) => &completion[idx + LAMBDA_HEAD.len()..],
        None => completion,
    };
    let body = body.trim_start();

    let mut stack: Vec<char> = Vec::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut end = body.len();
    for (idx, c) in body.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            } else if c == '\n' {
                return Err(ExtractError::Unbalanced("quote"));
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => stack.push(c),
            ')' | ']' | '}' => {
                let open = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                match stack.last() {
                    Some(&top) if top == open => {
                        stack.pop();
                    }
                    Some(_) => return Err(ExtractError::Unbalanced("bracket")),
                    None => {
                        end = idx;
                        break;
                    }
                }
            }
            ',' | '\n' if stack.is_empty() => {
                end = idx;
                break;
            }
            _ => {}
        }
    }
    if quote.is_some() {
        return Err(ExtractError::Unbalanced("quote"));
    }
    if !stack.is_empty() {
        return Err(ExtractError::Unbalanced("bracket"));
    }
    let slice = body[..end].trim();
    if slice.is_empty() || !looks_like_expression(slice) {
        return Err(ExtractError::NoExpression);
    }
    Ok(slice.to_string())
}

fn looks_like_expression(slice: &str) -> bool {
    const MARKERS: [&str; 7] = ["[", "(", "'", "\"", "==", "<", ">"];
    MARKERS.iter().any(|m| slice.contains(m))
        || matches!(slice, "true" | "True" | "false" | "False")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_scaffold_tail() {
        assert_eq!(
            extract_filter_source("'Westchester' in row_dict['School/Club Team'].lower(), axis=1)]")
                .unwrap(),
            "'Westchester' in row_dict['School/Club Team'].lower()"
        );
    }

    #[test]
    fn keeps_nested_groups() {
        // Depth goes 1 at `float(`, 2 at `row_dict[`, back to 0 after `])`,
        // then 1 for `(1+2)`; the first depth-0 comma ends the slice.
        assert_eq!(
            extract_filter_source("float(row_dict['a']) > (1+2), axis=1)]").unwrap(),
            "float(row_dict['a']) > (1+2)"
        );
    }

    #[test]
    fn commas_inside_quotes_and_brackets_do_not_end_the_slice() {
        assert_eq!(
            extract_filter_source(" 'a, b' in row_dict['x, y'], axis=1)]").unwrap(),
            "'a, b' in row_dict['x, y']"
        );
    }

    #[test]
    fn repeated_scaffold_is_skipped() {
        let completion =
            ">>> new_table = table[table.apply(lambda row_dict: float(row_dict['Goals']) >= 2, axis=1)]";
        assert_eq!(
            extract_filter_source(completion).unwrap(),
            "float(row_dict['Goals']) >= 2"
        );
    }

    #[test]
    fn unmatched_closer_ends_the_slice() {
        assert_eq!(extract_filter_source("True)]").unwrap(), "True");
    }

    #[test]
    fn prose_is_rejected() {
        assert_eq!(
            extract_filter_source("I would filter the rows by school"),
            Err(ExtractError::NoExpression)
        );
        assert_eq!(extract_filter_source("   "), Err(ExtractError::NoExpression));
    }

    #[test]
    fn unterminated_quote_is_rejected() {
        assert_eq!(
            extract_filter_source("'abc in row_dict['x']"),
            Err(ExtractError::Unbalanced("quote"))
        );
        assert_eq!(
            extract_filter_source("float(row_dict['a'] > 2"),
            Err(ExtractError::Unbalanced("bracket"))
        );
    }
}
