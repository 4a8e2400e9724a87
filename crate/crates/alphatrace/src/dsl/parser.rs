//! Recursive descent parser for the recipe concrete syntax.
//!
//! Whitespace-insensitive; numeric literals in decimal or scientific
//! notation. Errors carry the byte offset of the offending token.

use crate::error::{Error, Result};

use super::Expr;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<Option<(usize, Token)>> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b',' => {
                self.pos += 1;
                Token::Comma
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Token::Ident(
                    std::str::from_utf8(&self.src[start..self.pos])
                        .unwrap()
                        .to_string(),
                )
            }
            b'0'..=b'9' | b'+' | b'-' | b'.' => {
                // sign, digits, optional fraction and exponent
                self.pos += 1;
                while self.pos < self.src.len()
                    && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E')
                {
                    let was_exp = matches!(self.src[self.pos], b'e' | b'E');
                    self.pos += 1;
                    if was_exp
                        && self.pos < self.src.len()
                        && matches!(self.src[self.pos], b'+' | b'-')
                    {
                        self.pos += 1;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let value = text.parse::<f64>().map_err(|_| Error::Parse {
                    offset: start,
                    message: format!("invalid numeric literal '{text}'"),
                })?;
                Token::Number(value)
            }
            other => {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("unexpected character '{}'", other as char),
                })
            }
        };
        Ok(Some((start, tok)))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Option<(usize, Token)>>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<Option<&(usize, Token)>> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().unwrap().as_ref())
    }

    fn advance(&mut self) -> Result<Option<(usize, Token)>> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<usize> {
        match self.advance()? {
            Some((off, tok)) if tok == want => Ok(off),
            Some((off, tok)) => Err(Error::Parse {
                offset: off,
                message: format!("expected {what}, found {tok:?}"),
            }),
            None => Err(Error::Parse {
                offset: self.lexer.src.len(),
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expect_number(&mut self, what: &str) -> Result<(usize, f64)> {
        match self.advance()? {
            Some((off, Token::Number(v))) => Ok((off, v)),
            Some((off, tok)) => Err(Error::Parse {
                offset: off,
                message: format!("expected {what}, found {tok:?}"),
            }),
            None => Err(Error::Parse {
                offset: self.lexer.src.len(),
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expect_window(&mut self, what: &str) -> Result<usize> {
        let (off, v) = self.expect_number(what)?;
        if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
            return Err(Error::Parse {
                offset: off,
                message: format!("{what} must be a non-negative integer, got {v}"),
            });
        }
        Ok(v as usize)
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let (off, tok) = self.advance()?.ok_or(Error::Parse {
            offset: self.lexer.src.len(),
            message: "expected expression, found end of input".into(),
        })?;
        let name = match tok {
            Token::Ident(n) => n,
            other => {
                return Err(Error::Parse {
                    offset: off,
                    message: format!("expected operator name, found {other:?}"),
                })
            }
        };
        self.expect(Token::LParen, "'('")?;
        let expr = match name.as_str() {
            "col" => {
                let (coff, ctok) = self.advance()?.ok_or(Error::Parse {
                    offset: self.lexer.src.len(),
                    message: "expected column name".into(),
                })?;
                match ctok {
                    Token::Ident(col) => Expr::Column(col),
                    other => {
                        return Err(Error::Parse {
                            offset: coff,
                            message: format!("expected column name, found {other:?}"),
                        })
                    }
                }
            }
            "cs_rank" => Expr::CsRank(Box::new(self.parse_expr()?)),
            "cs_zscore" => Expr::CsZscore(Box::new(self.parse_expr()?)),
            "log1p" => Expr::Log1p(Box::new(self.parse_expr()?)),
            "abs" => Expr::Abs(Box::new(self.parse_expr()?)),
            "lag" | "roll_mean" | "roll_std" | "diff" | "pct_change" => {
                let n = self.expect_window("window/lag parameter")?;
                self.expect(Token::Comma, "','")?;
                let child = Box::new(self.parse_expr()?);
                match name.as_str() {
                    "lag" => Expr::Lag(n, child),
                    "roll_mean" => Expr::RollMean(n, child),
                    "roll_std" => Expr::RollStd(n, child),
                    "diff" => Expr::Diff(n, child),
                    _ => Expr::PctChange(n, child),
                }
            }
            "clip" => {
                let (_, lo) = self.expect_number("clip lower bound")?;
                self.expect(Token::Comma, "','")?;
                let (_, hi) = self.expect_number("clip upper bound")?;
                self.expect(Token::Comma, "','")?;
                Expr::Clip(lo, hi, Box::new(self.parse_expr()?))
            }
            "lincomb" => {
                let mut terms = Vec::new();
                loop {
                    let (_, w) = self.expect_number("lincomb weight")?;
                    self.expect(Token::Comma, "','")?;
                    terms.push((w, self.parse_expr()?));
                    match self.peek()? {
                        Some((_, Token::Comma)) => {
                            self.advance()?;
                        }
                        _ => break,
                    }
                }
                if terms.is_empty() {
                    return Err(Error::Parse {
                        offset: off,
                        message: "lincomb requires at least one (weight, expr) pair".into(),
                    });
                }
                Expr::LinComb(terms)
            }
            other => {
                return Err(Error::Parse {
                    offset: off,
                    message: format!("unknown operator '{other}'"),
                })
            }
        };
        self.expect(Token::RParen, "')'")?;
        Ok(expr)
    }
}

/// Parse a recipe source string into an expression tree.
pub fn parse_recipe(text: &str) -> Result<Expr> {
    let mut parser = Parser {
        lexer: Lexer::new(text),
        peeked: None,
    };
    let expr = parser.parse_expr()?;
    if let Some((off, tok)) = parser.advance()? {
        return Err(Error::Parse {
            offset: off,
            message: format!("trailing input after expression: {tok:?}"),
        });
    }
    Ok(expr)
}
