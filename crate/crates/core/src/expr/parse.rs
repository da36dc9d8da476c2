//! Infix and prefix readers.
//!
//! Infix grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = signed { ("*" | "/") signed } ;
//! signed  = ("-" | "+") signed | power ;
//! power   = atom [ ("^" | "**") signed ] ;          (* right associative *)
//! atom    = number | "x" digits | "c" digits | "pi" | "E"
//!         | name "(" expr ")" | "(" expr ")" | "|" expr "|" ;
//! ```

use std::collections::BTreeSet;

use super::{canonicalize, Expression, UnaryOp};
use crate::error::ParseError;
use crate::scalar::Scalar;

type E<T> = Expression<T>;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Bar,
}

fn describe(tok: Option<&Tok>) -> String {
    match tok {
        None => "end of input".into(),
        Some(Tok::Num(v)) => format!("number {v}"),
        Some(Tok::Ident(s)) => format!("'{s}'"),
        Some(t) => format!(
            "'{}'",
            match t {
                Tok::Plus => "+",
                Tok::Minus => "-",
                Tok::Star => "*",
                Tok::Slash => "/",
                Tok::Caret => "^",
                Tok::LParen => "(",
                Tok::RParen => ")",
                _ => "|",
            }
        ),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        let start = i;
        let tok = match ch {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' if bytes.get(i + 1) == Some(&b'*') => {
                i += 1;
                Tok::Caret
            }
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'|' => Tok::Bar,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part, only when followed by digits
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| ParseError::new(start, format!("malformed number '{s}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let c = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError::new(i, format!("unexpected character '{c}'")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    end: usize,
    arity: usize,
    in_bars: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn error(&self, what: &str) -> ParseError {
        ParseError::new(self.offset(), format!("{what}, found {}", describe(self.peek())))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn expr<T: Scalar>(&mut self) -> Result<E<T>, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(&Tok::Plus) {
                terms.push(self.term()?);
            } else if self.eat(&Tok::Minus) {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(E::sum(terms))
    }

    fn term<T: Scalar>(&mut self) -> Result<E<T>, ParseError> {
        let mut acc = self.signed()?;
        loop {
            if self.eat(&Tok::Star) {
                acc = acc * self.signed()?;
            } else if self.eat(&Tok::Slash) {
                acc = acc / self.signed()?;
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn signed<T: Scalar>(&mut self) -> Result<E<T>, ParseError> {
        if self.eat(&Tok::Minus) {
            Ok(-self.signed()?)
        } else if self.eat(&Tok::Plus) {
            self.signed()
        } else {
            self.power()
        }
    }

    fn power<T: Scalar>(&mut self) -> Result<E<T>, ParseError> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let exponent = self.signed()?;
            Ok(E::pow(base, exponent))
        } else {
            Ok(base)
        }
    }

    fn atom<T: Scalar>(&mut self) -> Result<E<T>, ParseError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(E::constant(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "expected ')'")?;
                Ok(inner)
            }
            Some(Tok::Bar) if self.in_bars == 0 || self.starts_operand() => {
                self.pos += 1;
                self.in_bars += 1;
                let inner = self.expr()?;
                self.in_bars -= 1;
                self.expect(&Tok::Bar, "expected closing '|'")?;
                Ok(E::unary(UnaryOp::Abs, inner))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.identifier(&name, at)
            }
            _ => Err(self.error("expected an operand")),
        }
    }

    /// Inside `|...|`, a bar opens a nested absolute value only where an
    /// operand is expected, i.e. when the previous token was an operator.
    fn starts_operand(&self) -> bool {
        match self.pos.checked_sub(1).map(|p| &self.toks[p].0) {
            None => true,
            Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::RParen) | Some(Tok::Bar) => false,
            _ => true,
        }
    }

    fn identifier<T: Scalar>(&mut self, name: &str, at: usize) -> Result<E<T>, ParseError> {
        if let Some(op) = UnaryOp::from_name(name) {
            self.expect(&Tok::LParen, &format!("expected '(' after {name}"))?;
            let arg = self.expr()?;
            self.expect(&Tok::RParen, "expected ')'")?;
            return Ok(E::unary(op, arg));
        }
        match name {
            "pi" => return Ok(E::Const(T::PI())),
            "E" => return Ok(E::Const(T::E())),
            _ => {}
        }
        let (head, digits) = name.split_at(1);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            let index: usize =
                digits.parse().map_err(|_| ParseError::new(at, format!("index too large in '{name}'")))?;
            match head {
                "x" if index < self.arity => return Ok(E::Var(index)),
                "x" => {
                    return Err(ParseError::new(at, format!("variable {name} out of range for arity {}", self.arity)))
                }
                "c" if index >= 1 && index <= u32::MAX as usize => return Ok(E::Placeholder(index as u32)),
                "c" => return Err(ParseError::new(at, "placeholder ids start at c1")),
                _ => {}
            }
        }
        Err(ParseError::new(at, format!("unknown identifier '{name}'")))
    }
}

/// Parses infix text over variables `x0..x{arity-1}` and returns the
/// canonical tree.
pub fn parse_infix<T: Scalar>(text: &str, arity: usize) -> Result<Expression<T>, ParseError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks: &toks, pos: 0, end: text.len(), arity, in_bars: 0 };
    let expr = parser.expr()?;
    if parser.pos < toks.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(canonicalize(&expr))
}

fn binary_token(tok: &str) -> bool {
    matches!(tok, "add" | "mul" | "div" | "pow" | "sub")
}

/// Parses a prefix token sequence (`mul`, `div`, `c`, `x`, `sin`, `2`, ...).
///
/// A bare `c` receives the next unused placeholder id; `c<k>` names one
/// explicitly. A bare `x` is `x0`. The error position is the token index.
pub fn parse_prefix<T: Scalar, S: AsRef<str>>(tokens: &[S]) -> Result<Expression<T>, ParseError> {
    let explicit: BTreeSet<u32> =
        tokens.iter().filter_map(|t| t.as_ref().strip_prefix('c').and_then(|d| d.parse().ok())).collect();
    let mut next_fresh = 1u32;
    let mut fresh = move || {
        while explicit.contains(&next_fresh) {
            next_fresh += 1;
        }
        next_fresh += 1;
        next_fresh - 1
    };

    // Walk right to left with an operand stack.
    let mut stack: Vec<E<T>> = Vec::new();
    let mut ids = vec![0u32; tokens.len()];
    // bare placeholders are numbered left to right
    for (i, t) in tokens.iter().enumerate() {
        if t.as_ref() == "c" {
            ids[i] = fresh();
        }
    }
    for (i, tok) in tokens.iter().enumerate().rev() {
        let tok = tok.as_ref();
        let pop = |stack: &mut Vec<E<T>>| {
            stack.pop().ok_or_else(|| ParseError::new(i, format!("missing operand for '{tok}'")))
        };
        let node = if binary_token(tok) {
            let a = pop(&mut stack)?;
            let b = pop(&mut stack)?;
            match tok {
                "add" => a + b,
                "sub" => a - b,
                "mul" => a * b,
                "div" => a / b,
                _ => E::pow(a, b),
            }
        } else if tok == "square" {
            E::powi(pop(&mut stack)?, 2)
        } else if let Some(op) = UnaryOp::from_name(tok) {
            E::unary(op, pop(&mut stack)?)
        } else if tok == "c" {
            E::Placeholder(ids[i])
        } else if tok == "x" {
            E::Var(0)
        } else if tok == "E" {
            E::Const(T::E())
        } else if let Some(id) = tok.strip_prefix('c').and_then(|d| d.parse::<u32>().ok()) {
            if id == 0 {
                return Err(ParseError::new(i, "placeholder ids start at c1"));
            }
            E::Placeholder(id)
        } else if let Some(k) = tok.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
            E::Var(k)
        } else if let Ok(v) = tok.parse::<f64>() {
            E::constant(v)
        } else {
            return Err(ParseError::new(i, format!("unknown token '{tok}'")));
        };
        stack.push(node);
    }
    match stack.len() {
        0 => Err(ParseError::new(0, "empty token sequence")),
        1 => Ok(canonicalize(&stack.pop().unwrap())),
        n => Err(ParseError::new(0, format!("{} operands left over", n - 1))),
    }
}
