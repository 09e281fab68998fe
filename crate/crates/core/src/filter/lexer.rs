use super::ast::CmpOp;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Str(String),
    /// Numeric literal, kept as source text so `row[#k]` can demand an integer.
    Num(String),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Hash,
    Dot,
    Minus,
    Cmp(CmpOp),
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Str(s) => format!("string {s:?}"),
            TokenKind::Num(n) => format!("number {n}"),
            TokenKind::Ident(i) => format!("`{i}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Hash => "`#`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Cmp(op) => format!("`{}`", op.symbol()),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    /// Byte offset into the source.
    pub pos: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();

    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = match c {
            '(' => single(&mut chars, TokenKind::LParen),
            ')' => single(&mut chars, TokenKind::RParen),
            '[' => single(&mut chars, TokenKind::LBracket),
            ']' => single(&mut chars, TokenKind::RBracket),
            '#' => single(&mut chars, TokenKind::Hash),
            '-' => single(&mut chars, TokenKind::Minus),
            '.' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, d)) if d.is_ascii_digit() => {
                        let mut text = String::from("0.");
                        while let Some(&(_, d)) = chars.peek() {
                            if !d.is_ascii_digit() {
                                break;
                            }
                            text.push(d);
                            chars.next();
                        }
                        lex_exponent(&mut chars, &mut text);
                        TokenKind::Num(text)
                    }
                    _ => TokenKind::Dot,
                }
            }
            '=' | '!' | '<' | '>' => {
                chars.next();
                let followed_by_eq = matches!(chars.peek(), Some(&(_, '=')));
                if followed_by_eq {
                    chars.next();
                }
                let op = match (c, followed_by_eq) {
                    ('=', true) => CmpOp::Eq,
                    ('!', true) => CmpOp::Ne,
                    ('<', true) => CmpOp::Le,
                    ('>', true) => CmpOp::Ge,
                    ('<', false) => CmpOp::Lt,
                    ('>', false) => CmpOp::Gt,
                    _ => {
                        return Err(ParseError::new(
                            pos,
                            format!("unexpected character `{c}`"),
                            vec!["`==`".into(), "`!=`".into()],
                        ))
                    }
                };
                TokenKind::Cmp(op)
            }
            '\'' | '"' => lex_string(&mut chars, pos, c)?,
            d if d.is_ascii_digit() => {
                let mut text = String::new();
                while let Some(&(_, d)) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    text.push(d);
                    chars.next();
                }
                let mut probe = chars.clone();
                if let (Some((_, '.')), Some((_, d))) = (probe.next(), probe.next()) {
                    if d.is_ascii_digit() {
                        chars.next();
                        text.push('.');
                        while let Some(&(_, d)) = chars.peek() {
                            if !d.is_ascii_digit() {
                                break;
                            }
                            text.push(d);
                            chars.next();
                        }
                    }
                }
                lex_exponent(&mut chars, &mut text);
                TokenKind::Num(text)
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut ident = String::new();
                while let Some(&(_, a)) = chars.peek() {
                    if !(a.is_alphanumeric() || a == '_') {
                        break;
                    }
                    ident.push(a);
                    chars.next();
                }
                TokenKind::Ident(ident)
            }
            other => {
                return Err(ParseError::new(
                    pos,
                    format!("unexpected character `{other}`"),
                    Vec::new(),
                ))
            }
        };
        tokens.push(Token { kind, pos });
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos: src.len(),
    });
    Ok(tokens)
}

type Chars<'a> = std::iter::Peekable<std::str::CharIndices<'a>>;

fn single(chars: &mut Chars<'_>, kind: TokenKind) -> TokenKind {
    chars.next();
    kind
}

fn lex_exponent(chars: &mut Chars<'_>, text: &mut String) {
    let mut probe = chars.clone();
    let Some((_, e)) = probe.next() else { return };
    if e != 'e' && e != 'E' {
        return;
    }
    let mut suffix = String::from("e");
    let mut next = probe.next();
    if let Some((_, s @ ('+' | '-'))) = next {
        suffix.push(s);
        next = probe.next();
    }
    match next {
        Some((_, d)) if d.is_ascii_digit() => {}
        _ => return,
    }
    // Commit: consume the exponent marker, sign and digits.
    chars.next();
    if suffix.len() == 2 {
        chars.next();
    }
    text.push_str(&suffix);
    while let Some(&(_, d)) = chars.peek() {
        if !d.is_ascii_digit() {
            break;
        }
        text.push(d);
        chars.next();
    }
}

fn lex_string(chars: &mut Chars<'_>, start: usize, quote: char) -> Result<TokenKind, ParseError> {
    chars.next();
    let mut value = String::new();
    loop {
        let Some((_, c)) = chars.next() else {
            return Err(ParseError::new(
                start,
                "unterminated string literal",
                vec![format!("`{quote}`")],
            ));
        };
        match c {
            '\\' => {
                let Some((_, esc)) = chars.next() else {
                    return Err(ParseError::new(
                        start,
                        "unterminated string literal",
                        vec![format!("`{quote}`")],
                    ));
                };
                match esc {
                    'n' => value.push('\n'),
                    't' => value.push('\t'),
                    'r' => value.push('\r'),
                    '\\' | '\'' | '"' => value.push(esc),
                    other => {
                        value.push('\\');
                        value.push(other);
                    }
                }
            }
            c if c == quote => return Ok(TokenKind::Str(value)),
            c => value.push(c),
        }
    }
}
