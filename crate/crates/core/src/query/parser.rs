//! Recursive-descent parser for query text.
//!
//! ```text
//! query   := ('/' level)+
//! level   := '*' | '[' expr ']'
//! expr    := and ('or' and)*
//! and     := unary ('and' unary)*
//! unary   := 'not' unary | '(' expr ')' | endswith | chain | 'true' | 'false'
//! chain   := operand (cmp operand)+
//! operand := field | literal
//! ```

use std::sync::Arc;

use super::{Expr, PathQuery, Predicate};
use crate::error::{Error, Result};
use crate::value::{CmpOp, Scalar};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Slash,
    Star,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Op(CmpOp),
    Ident(String),
    Lit(Scalar),
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn syntax(pos: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        pos,
        msg: msg.into(),
    }
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn next_tok(&mut self) -> Result<(usize, Tok)> {
        while self.peek_char().is_some_and(char::is_whitespace) {
            self.bump();
        }
        let start = self.pos;
        let Some(c) = self.bump() else {
            return Ok((start, Tok::Eof));
        };
        let tok = match c {
            '/' => Tok::Slash,
            '*' => Tok::Star,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '<' => match self.peek_char() {
                Some('=') => {
                    self.bump();
                    Tok::Op(CmpOp::Le)
                }
                Some('>') => {
                    self.bump();
                    Tok::Op(CmpOp::Ne)
                }
                _ => Tok::Op(CmpOp::Lt),
            },
            '>' => {
                if self.peek_char() == Some('=') {
                    self.bump();
                    Tok::Op(CmpOp::Ge)
                } else {
                    Tok::Op(CmpOp::Gt)
                }
            }
            '=' => {
                if self.peek_char() == Some('=') {
                    self.bump();
                }
                Tok::Op(CmpOp::Eq)
            }
            '!' => {
                if self.bump() != Some('=') {
                    return Err(syntax(start, "unknown operator '!'"));
                }
                Tok::Op(CmpOp::Ne)
            }
            '\'' | '"' => Tok::Lit(Scalar::Str(self.string(c, start)?)),
            c if c.is_ascii_digit() || (c == '-' && self.peek_char().is_some_and(|d| d.is_ascii_digit())) => {
                self.number(start)?
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while self
                    .peek_char()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
                {
                    self.bump();
                }
                let word = &self.src[start..self.pos];
                if word.ends_with('.') || word.contains("..") {
                    return Err(syntax(start, format!("invalid field path {word:?}")));
                }
                match word {
                    "true" => Tok::Lit(Scalar::Bool(true)),
                    "false" => Tok::Lit(Scalar::Bool(false)),
                    "null" => Tok::Lit(Scalar::Null),
                    _ => Tok::Ident(word.to_string()),
                }
            }
            other => return Err(syntax(start, format!("unexpected character {other:?}"))),
        };
        Ok((start, tok))
    }

    fn string(&mut self, quote: char, start: usize) -> Result<String> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(syntax(start, "unterminated string literal")),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('\\' | '\'' | '"')) => out.push(c),
                    Some(c) => return Err(syntax(self.pos - c.len_utf8(), format!("unknown escape \\{c}"))),
                    None => return Err(syntax(start, "unterminated string literal")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok> {
        if self.src[start..].starts_with("0x") {
            self.bump();
            while self.peek_char().is_some_and(|c| c.is_ascii_hexdigit()) {
                self.bump();
            }
            let hex = &self.src[start + 2..self.pos];
            if hex.len() % 2 != 0 {
                return Err(syntax(start, "odd-length hex literal"));
            }
            let bytes = (0..hex.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap())
                .collect();
            return Ok(Tok::Lit(Scalar::Bytes(bytes)));
        }
        let mut float = false;
        while let Some(c) = self.peek_char() {
            match c {
                '0'..='9' => {}
                '.' | 'e' | 'E' => float = true,
                '+' | '-' if matches!(self.src[..self.pos].chars().last(), Some('e' | 'E')) => {}
                _ => break,
            }
            self.bump();
        }
        let text = &self.src[start..self.pos];
        let bad = || syntax(start, format!("invalid number {text:?}"));
        if float {
            text.parse::<f64>().map(|f| Tok::Lit(Scalar::Float(f))).map_err(|_| bad())
        } else {
            text.parse::<i64>().map(|i| Tok::Lit(Scalar::Int(i))).map_err(|_| bad())
        }
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    pos: usize,
}

enum Operand {
    Field(String),
    Lit(Scalar),
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut lex = Lexer { src, pos: 0 };
        let (pos, tok) = lex.next_tok()?;
        Ok(Parser { lex, tok, pos })
    }

    fn advance(&mut self) -> Result<Tok> {
        let (pos, tok) = self.lex.next_tok()?;
        self.pos = pos;
        Ok(std::mem::replace(&mut self.tok, tok))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.tok == want {
            self.advance()?;
            Ok(())
        } else {
            Err(syntax(self.pos, format!("expected {what}")))
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    fn query(&mut self) -> Result<PathQuery> {
        let mut levels = Vec::new();
        if self.tok != Tok::Slash {
            return Err(syntax(self.pos, "query must start with '/'"));
        }
        while self.tok == Tok::Slash {
            self.advance()?;
            levels.push(Arc::new(self.level()?));
        }
        if self.tok != Tok::Eof {
            return Err(syntax(self.pos, "expected '/' or end of query"));
        }
        Ok(PathQuery { levels })
    }

    fn level(&mut self) -> Result<Predicate> {
        match self.tok {
            Tok::Star => {
                self.advance()?;
                Ok(Predicate::Wildcard)
            }
            Tok::LBracket => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(Tok::RBracket, "']'")?;
                Ok(Predicate::Expr(e))
            }
            _ => Err(syntax(self.pos, "expected '*' or '['")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut xs = vec![self.and()?];
        while self.keyword("or") {
            self.advance()?;
            xs.push(self.and()?);
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { Expr::Or(xs) })
    }

    fn and(&mut self) -> Result<Expr> {
        let mut xs = vec![self.unary()?];
        while self.keyword("and") {
            self.advance()?;
            xs.push(self.unary()?);
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { Expr::And(xs) })
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.keyword("not") {
            self.advance()?;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.tok == Tok::LParen {
            self.advance()?;
            let e = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(e);
        }
        if self.keyword("endswith") {
            let at = self.pos;
            self.advance()?;
            if self.tok == Tok::LParen {
                self.advance()?;
                let field = match self.advance()? {
                    Tok::Ident(f) => f,
                    _ => return Err(syntax(self.pos, "endswith expects a field path")),
                };
                self.expect(Tok::Comma, "','")?;
                let suffix = match self.advance()? {
                    Tok::Lit(Scalar::Str(s)) => s,
                    _ => return Err(syntax(self.pos, "endswith expects a string suffix")),
                };
                self.expect(Tok::RParen, "')'")?;
                return Ok(Expr::EndsWith { field, suffix });
            }
            return self.chain(at, Operand::Field("endswith".into()));
        }
        let at = self.pos;
        let first = self.operand()?;
        if !matches!(self.tok, Tok::Op(_)) {
            return match first {
                Operand::Lit(Scalar::Bool(b)) => Ok(Expr::Const(b)),
                _ => Err(syntax(self.pos, "expected comparison operator")),
            };
        }
        self.chain(at, first)
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.tok.clone() {
            Tok::Ident(w) if is_reserved(&w) => {
                Err(syntax(self.pos, format!("unexpected keyword {w:?}")))
            }
            Tok::Ident(f) => {
                self.advance()?;
                Ok(Operand::Field(f))
            }
            Tok::Lit(s) => {
                self.advance()?;
                Ok(Operand::Lit(s))
            }
            Tok::Eof => Err(syntax(self.pos, "unexpected end of query")),
            _ => Err(syntax(self.pos, "expected field or literal")),
        }
    }

    fn chain(&mut self, at: usize, first: Operand) -> Result<Expr> {
        let mut cmps = Vec::new();
        let mut left = first;
        while let Tok::Op(op) = self.tok {
            let op_pos = self.pos;
            self.advance()?;
            let right = self.operand()?;
            let cmp = match (&left, &right) {
                (Operand::Field(f), Operand::Lit(l)) => Expr::Cmp {
                    field: f.clone(),
                    op,
                    lit: l.clone(),
                },
                (Operand::Lit(l), Operand::Field(f)) => Expr::Cmp {
                    field: f.clone(),
                    op: op.flipped(),
                    lit: l.clone(),
                },
                _ => {
                    return Err(syntax(
                        op_pos,
                        "comparison needs exactly one field and one literal",
                    ))
                }
            };
            cmps.push(cmp);
            left = right;
        }
        if cmps.is_empty() {
            return Err(syntax(at, "expected comparison operator"));
        }
        Ok(if cmps.len() == 1 { cmps.pop().unwrap() } else { Expr::And(cmps) })
    }
}

fn is_reserved(w: &str) -> bool {
    ["and", "or", "not"].iter().any(|k| w.eq_ignore_ascii_case(k))
}

pub fn parse_query(text: &str) -> Result<PathQuery> {
    Parser::new(text)?.query()
}

/// Parses a single level (`*` or `[expr]`).
pub fn parse_predicate(text: &str) -> Result<Predicate> {
    let mut p = Parser::new(text)?;
    let pred = p.level()?;
    if p.tok != Tok::Eof {
        return Err(syntax(p.pos, "trailing input after predicate"));
    }
    Ok(pred)
}
