//! Recursive-descent parser for objective strings.
//!
//! ```text
//! objective := summand ('+' summand)*
//! summand   := [NUMBER '*'] 'max' '{' expr (',' expr)* '}'
//!            | [NUMBER '*'] 'max' '{' expr 'for' IDENT 'in' nodeset '}'
//! nodeset   := 'V' | '{' NAME (',' NAME)* '}'
//! expr      := arithmetic over ET(node,INT), VT(node,INT), NUMBER,
//!              sqrt(expr), pow(expr,NUMBER), expr '^' NUMBER
//! ```

use std::fmt;

use super::{AtomKind, BinOp, Expr, NodeSet, Objective, Summand, TermSet};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ParseError {
    /// Byte offset into the input.
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at position {}: {}", self.pos, self.msg)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x, _) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'0'..=b'9' | b'.' => {
                let mut integral = true;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    integral = false;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        integral = false;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    pos: start,
                    msg: format!("malformed number {text:?}"),
                })?;
                out.push((Tok::Num(value, integral), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ParseError {
                    pos: start,
                    msg: format!("unexpected character {:?}", src[start..].chars().next().unwrap()),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.fail(format!("expected a name, found {other}")),
        }
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(x, _) => {
                self.bump();
                Ok(if negative { -x } else { x })
            }
            other => self.fail(format!("expected a number, found {other}")),
        }
    }

    fn objective(&mut self) -> PResult<Objective> {
        let mut summands = vec![self.summand()?];
        while *self.peek() == Tok::Plus {
            self.bump();
            summands.push(self.summand()?);
        }
        if *self.peek() != Tok::End {
            return self.fail(format!("expected '+' or end of input, found {}", self.peek()));
        }
        Ok(Objective { summands })
    }

    fn summand(&mut self) -> PResult<Summand> {
        let mut weight = 1.0;
        if matches!(self.peek(), Tok::Num(..) | Tok::Minus) {
            let pos = self.pos();
            weight = self.signed_number()?;
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(ParseError { pos, msg: format!("summand weight must be positive, got {weight}") });
            }
            self.expect(Tok::Star)?;
        }
        if !self.is_ident("max") {
            return self.fail(format!("expected 'max', found {}", self.peek()));
        }
        self.bump();
        self.expect(Tok::LBrace)?;
        let first = self.expr()?;
        let terms = if self.is_ident("for") {
            self.bump();
            let var = self.ident()?;
            if !self.is_ident("in") {
                return self.fail(format!("expected 'in', found {}", self.peek()));
            }
            self.bump();
            let nodes = self.nodeset()?;
            TermSet::Each { body: first, var, nodes }
        } else {
            let mut list = vec![first];
            while *self.peek() == Tok::Comma {
                self.bump();
                list.push(self.expr()?);
            }
            TermSet::List(list)
        };
        self.expect(Tok::RBrace)?;
        Ok(Summand { weight, terms })
    }

    fn nodeset(&mut self) -> PResult<NodeSet> {
        if self.is_ident("V") {
            self.bump();
            return Ok(NodeSet::All);
        }
        self.expect(Tok::LBrace)?;
        let mut names = vec![self.ident()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            names.push(self.ident()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(NodeSet::Names(names))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // a minus directly on a literal is a negative literal
            if let Tok::Num(x, _) = *self.peek() {
                if *self.peek2() != Tok::Caret {
                    self.bump();
                    return Ok(Expr::Num(-x));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.signed_number()?;
            return Ok(Expr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(x, _) => Ok(Expr::Num(x)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    return Err(ParseError { pos, msg: format!("unexpected name '{name}'") });
                }
                self.bump();
                let e = match name.as_str() {
                    "ET" | "VT" => {
                        let node = self.ident()?;
                        self.expect(Tok::Comma)?;
                        let fpos = self.pos();
                        let faults = match self.bump() {
                            Tok::Num(x, true) if x <= u32::MAX as f64 => x as u32,
                            other => {
                                return Err(ParseError {
                                    pos: fpos,
                                    msg: format!("expected a fault count, found {other}"),
                                })
                            }
                        };
                        let kind = if name == "ET" { AtomKind::ET } else { AtomKind::VT };
                        Expr::Atom { kind, node, faults }
                    }
                    "sqrt" => Expr::Sqrt(Box::new(self.expr()?)),
                    "pow" => {
                        let base = self.expr()?;
                        self.expect(Tok::Comma)?;
                        Expr::Pow(Box::new(base), self.signed_number()?)
                    }
                    _ => return Err(ParseError { pos, msg: format!("unknown function '{name}'") }),
                };
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(ParseError { pos, msg: format!("unexpected {other}") }),
        }
    }
}

pub fn parse_objective(src: &str) -> Result<Objective, ParseError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0 };
    p.objective()
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(format!("trailing {}", p.peek()));
    }
    Ok(e)
}
