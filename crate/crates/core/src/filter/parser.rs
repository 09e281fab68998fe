//! Recursive-descent parser for row predicates.
//!
//! Accepts the canonical surface syntax plus the completion dialect that
//! language models produce after a `lambda row_dict:` scaffold:
//! `e.lower()` is normalized to `lower(e)`, `row_dict` is an alias for
//! `row`, `True`/`False` are boolean literals and `a not in b` desugars to
//! `not a in b`.

use super::ast::{Expr, Func};
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

/// Nesting limit for parenthesized groups, calls and `not` chains.
pub const MAX_NESTING: usize = 128;

/// Upper bound on the token count of a single predicate.
pub const MAX_TOKENS: usize = 2048;

const ROW_NAMES: [&str; 2] = ["row", "row_dict"];

pub fn parse_predicate(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    if tokens.len() > MAX_TOKENS {
        return Err(ParseError::new(
            tokens[MAX_TOKENS].pos,
            format!("predicate longer than {MAX_TOKENS} tokens"),
            Vec::new(),
        ));
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        depth: 0,
    };
    let expr = parser.parse_or()?;
    let tail = parser.peek();
    if tail.kind != TokenKind::Eof {
        return Err(parser.unexpected(&["`and`", "`or`", "end of input"]));
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.cursor]
    }

    fn peek_at(&self, offset: usize) -> &Token {
        let idx = (self.cursor + offset).min(self.tokens.len() - 1);
        &self.tokens[idx]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.cursor].clone();
        if self.cursor < self.tokens.len() - 1 {
            self.cursor += 1;
        }
        tok
    }

    fn is_keyword(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(i) if i == word)
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let tok = self.peek();
        ParseError::new(
            tok.pos,
            format!("unexpected {}", tok.kind.describe()),
            expected.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn expect(&mut self, kind: TokenKind, label: &str) -> Result<Token, ParseError> {
        if self.peek().kind == kind {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[label]))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(ParseError::new(
                self.peek().pos,
                format!("expression nested deeper than {MAX_NESTING} levels"),
                Vec::new(),
            ));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.is_keyword("or") {
            self.advance();
            let rhs = self.parse_and()?;
            lhs = Expr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_not()?;
        while self.is_keyword("and") {
            self.advance();
            let rhs = self.parse_not()?;
            lhs = Expr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.is_keyword("not") {
            self.advance();
            self.enter()?;
            let inner = self.parse_not()?;
            self.leave();
            return Ok(Expr::not(inner));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.parse_postfix()?;
        match self.peek().kind.clone() {
            TokenKind::Cmp(op) => {
                self.advance();
                let rhs = self.parse_postfix()?;
                Ok(Expr::compare(op, lhs, rhs))
            }
            TokenKind::Ident(word) if word == "in" => {
                self.advance();
                let rhs = self.parse_postfix()?;
                Ok(Expr::contains(lhs, rhs))
            }
            TokenKind::Ident(word)
                if word == "not"
                    && matches!(&self.peek_at(1).kind, TokenKind::Ident(w) if w == "in") =>
            {
                self.advance();
                self.advance();
                let rhs = self.parse_postfix()?;
                Ok(Expr::not(Expr::contains(lhs, rhs)))
            }
            _ => Ok(lhs),
        }
    }

    fn parse_postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.parse_primary()?;
        while self.peek().kind == TokenKind::Dot {
            self.advance();
            let name_tok = self.advance();
            let TokenKind::Ident(name) = name_tok.kind else {
                return Err(ParseError::new(
                    name_tok.pos,
                    format!("unexpected {}", name_tok.kind.describe()),
                    vec!["method name".into()],
                ));
            };
            if name != "lower" {
                return Err(ParseError::new(
                    name_tok.pos,
                    format!("unknown method `{name}`"),
                    vec!["`lower`".into()],
                ));
            }
            self.expect(TokenKind::LParen, "`(`")?;
            self.expect(TokenKind::RParen, "`)`")?;
            expr = Expr::call(Func::Lower, expr);
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Str(s) => {
                self.advance();
                Ok(Expr::Str(s))
            }
            TokenKind::Num(text) => {
                self.advance();
                Ok(Expr::Num(parse_number(&text, tok.pos)?))
            }
            TokenKind::Minus => {
                self.advance();
                let num_tok = self.advance();
                match num_tok.kind {
                    TokenKind::Num(text) => Ok(Expr::Num(-parse_number(&text, num_tok.pos)?)),
                    other => Err(ParseError::new(
                        num_tok.pos,
                        format!("unexpected {}", other.describe()),
                        vec!["number".into()],
                    )),
                }
            }
            TokenKind::LParen => {
                self.advance();
                self.enter()?;
                let inner = self.parse_or()?;
                self.leave();
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(word) => match word.as_str() {
                "true" | "True" => {
                    self.advance();
                    Ok(Expr::Bool(true))
                }
                "false" | "False" => {
                    self.advance();
                    Ok(Expr::Bool(false))
                }
                w if ROW_NAMES.contains(&w) => {
                    self.advance();
                    self.parse_access()
                }
                _ => {
                    if self.peek_at(1).kind != TokenKind::LParen {
                        return Err(ParseError::new(
                            tok.pos,
                            format!("unknown name `{word}`"),
                            expected_term(),
                        ));
                    }
                    let Some(func) = Func::from_name(&word) else {
                        return Err(ParseError::new(
                            tok.pos,
                            format!("unknown function `{word}`"),
                            Func::ALL.iter().map(|f| format!("`{}`", f.name())).collect(),
                        ));
                    };
                    self.advance();
                    self.advance();
                    self.enter()?;
                    let arg = self.parse_or()?;
                    self.leave();
                    self.expect(TokenKind::RParen, "`)`")?;
                    Ok(Expr::call(func, arg))
                }
            },
            _ => Err(ParseError::new(
                tok.pos,
                format!("unexpected {}", tok.kind.describe()),
                expected_term(),
            )),
        }
    }

    fn parse_access(&mut self) -> Result<Expr, ParseError> {
        self.expect(TokenKind::LBracket, "`[`")?;
        let tok = self.advance();
        let expr = match tok.kind {
            TokenKind::Str(name) => Expr::Column(name),
            TokenKind::Hash => {
                let idx_tok = self.advance();
                match &idx_tok.kind {
                    TokenKind::Num(text) => match text.parse::<usize>() {
                        Ok(idx) => Expr::Position(idx),
                        Err(_) => {
                            return Err(ParseError::new(
                                idx_tok.pos,
                                format!("column position `{text}` is not a non-negative integer"),
                                vec!["integer".into()],
                            ))
                        }
                    },
                    other => {
                        return Err(ParseError::new(
                            idx_tok.pos,
                            format!("unexpected {}", other.describe()),
                            vec!["integer".into()],
                        ))
                    }
                }
            }
            other => {
                return Err(ParseError::new(
                    tok.pos,
                    format!("unexpected {}", other.describe()),
                    vec!["string".into(), "`#`".into()],
                ))
            }
        };
        self.expect(TokenKind::RBracket, "`]`")?;
        Ok(expr)
    }
}

fn expected_term() -> Vec<String> {
    [
        "string",
        "number",
        "`true`",
        "`false`",
        "`row[...]`",
        "`lower(`",
        "`float(`",
        "`len(`",
        "`(`",
        "`not`",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn parse_number(text: &str, pos: usize) -> Result<f64, ParseError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::new(
            pos,
            format!("number literal `{text}` is out of range"),
            Vec::new(),
        )),
    }
}
