//! Hand-rolled recursive-descent parsers for the three text inputs the
//! command line accepts: exact rationals, coefficient lists like `1=-1,2=1`,
//! and the element syntax emitted by the word-algebra formatter, e.g.
//! `(-1)*w[t,t,t] + (3)*n^1*w[t]`.
//!
//! All parsers report errors with one-based line and column positions and
//! never panic on malformed input.

use ncbv::cyclic::{CyclicError, LambdaElement, WordAlgebra};
use ncbv::scalar::Q;
use num::BigInt;
use std::fmt;

/// A syntax error with a one-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

/// Character cursor tracking line and column.
pub(crate) struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    pub(crate) fn new(s: &str) -> Self {
        Cursor {
            chars: s.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    pub(crate) fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    pub(crate) fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    pub(crate) fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    pub(crate) fn eat(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected '{want}', found '{c}'"))),
            None => Err(self.err(format!("expected '{want}', found end of input"))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == ':'
}

pub(crate) fn parse_ident(cur: &mut Cursor) -> Result<String, ParseError> {
    match cur.peek() {
        Some(c) if is_ident_start(c) => {}
        Some(c) => return Err(cur.err(format!("expected a name, found '{c}'"))),
        None => return Err(cur.err("expected a name, found end of input")),
    }
    let mut out = String::new();
    while matches!(cur.peek(), Some(c) if is_ident_continue(c)) {
        out.push(cur.bump().unwrap());
    }
    Ok(out)
}

fn parse_digits(cur: &mut Cursor) -> Result<String, ParseError> {
    match cur.peek() {
        Some(c) if c.is_ascii_digit() => {}
        Some(c) => return Err(cur.err(format!("expected a digit, found '{c}'"))),
        None => return Err(cur.err("expected a digit, found end of input")),
    }
    let mut out = String::new();
    while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
        out.push(cur.bump().unwrap());
    }
    Ok(out)
}

/// An exact rational: optional sign, digits, optional `/denominator`.
pub(crate) fn parse_rational(cur: &mut Cursor) -> Result<Q, ParseError> {
    let negative = if cur.peek() == Some('-') {
        cur.bump();
        true
    } else {
        false
    };
    let numer = parse_digits(cur)?;
    let mut n: BigInt = numer.parse().expect("digit string");
    if negative {
        n = -n;
    }
    let d: BigInt = if cur.peek() == Some('/') {
        cur.bump();
        let denom_pos = (cur.line, cur.col);
        let denom = parse_digits(cur)?;
        let d: BigInt = denom.parse().expect("digit string");
        if d == BigInt::from(0) {
            return Err(ParseError {
                line: denom_pos.0,
                col: denom_pos.1,
                msg: "zero denominator".to_string(),
            });
        }
        d
    } else {
        BigInt::from(1)
    };
    Ok(Q::new(n, d))
}

fn parse_u32(cur: &mut Cursor) -> Result<u32, ParseError> {
    let start = (cur.line, cur.col);
    let digits = parse_digits(cur)?;
    digits.parse::<u32>().map_err(|_| ParseError {
        line: start.0,
        col: start.1,
        msg: format!("number '{digits}' is too large"),
    })
}

/// Parses a rational from a standalone string, requiring it to span the
/// whole input.
pub fn rational_from_str(s: &str) -> Result<Q, ParseError> {
    let mut cur = Cursor::new(s);
    cur.skip_ws();
    let q = parse_rational(&mut cur)?;
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.err("trailing characters after rational"));
    }
    Ok(q)
}

/// Parses a coefficient list `1=-1,2=1` into `(index, value)` pairs.
///
/// Indices are one-based and must be strictly increasing-free of
/// duplicates; an empty (or all-whitespace) string is the empty list.
pub fn parse_coeff_list(s: &str) -> Result<Vec<(u32, Q)>, ParseError> {
    let mut cur = Cursor::new(s);
    cur.skip_ws();
    let mut out: Vec<(u32, Q)> = Vec::new();
    if cur.at_end() {
        return Ok(out);
    }
    loop {
        let start = (cur.line, cur.col);
        let idx = parse_u32(&mut cur)?;
        if idx == 0 {
            return Err(ParseError {
                line: start.0,
                col: start.1,
                msg: "coefficient indices start at 1".to_string(),
            });
        }
        if out.iter().any(|(i, _)| *i == idx) {
            return Err(ParseError {
                line: start.0,
                col: start.1,
                msg: format!("duplicate coefficient index {idx}"),
            });
        }
        cur.skip_ws();
        cur.eat('=')?;
        cur.skip_ws();
        let q = parse_rational(&mut cur)?;
        out.push((idx, q));
        cur.skip_ws();
        if cur.at_end() {
            break;
        }
        cur.eat(',')?;
        cur.skip_ws();
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out)
}

/// One parsed term: coefficient times `g^gamma * n^nu * w[...]...` factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementTerm {
    pub coeff: Q,
    pub gamma: u32,
    pub nu: u32,
    pub words: Vec<Vec<String>>,
}

/// A parsed element, not yet tied to any particular letter alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementAst {
    pub terms: Vec<ElementTerm>,
}

fn parse_term(cur: &mut Cursor) -> Result<ElementTerm, ParseError> {
    cur.eat('(')?;
    cur.skip_ws();
    let coeff = parse_rational(cur)?;
    cur.skip_ws();
    cur.eat(')')?;
    let mut term = ElementTerm {
        coeff,
        gamma: 0,
        nu: 0,
        words: Vec::new(),
    };
    loop {
        let save = (cur.pos, cur.line, cur.col);
        cur.skip_ws();
        if cur.peek() != Some('*') {
            cur.pos = save.0;
            cur.line = save.1;
            cur.col = save.2;
            break;
        }
        cur.bump();
        cur.skip_ws();
        match cur.peek() {
            Some('g') | Some('n') => {
                let which = cur.bump().unwrap();
                cur.eat('^')?;
                let start = (cur.line, cur.col);
                let e = parse_u32(cur)?;
                let slot = if which == 'g' {
                    &mut term.gamma
                } else {
                    &mut term.nu
                };
                *slot = slot.checked_add(e).ok_or(ParseError {
                    line: start.0,
                    col: start.1,
                    msg: "exponent too large".to_string(),
                })?;
            }
            Some('w') => {
                cur.bump();
                cur.eat('[')?;
                cur.skip_ws();
                let mut letters = vec![parse_ident(cur)?];
                cur.skip_ws();
                while cur.peek() == Some(',') {
                    cur.bump();
                    cur.skip_ws();
                    letters.push(parse_ident(cur)?);
                    cur.skip_ws();
                }
                cur.eat(']')?;
                term.words.push(letters);
            }
            Some(c) => return Err(cur.err(format!("expected 'g', 'n', or 'w', found '{c}'"))),
            None => return Err(cur.err("expected a factor after '*'")),
        }
    }
    Ok(term)
}

/// Parses the element syntax: `0`, or `(q)*factors` terms joined by `+`/`-`.
pub fn parse_element(s: &str) -> Result<ElementAst, ParseError> {
    let mut cur = Cursor::new(s);
    cur.skip_ws();
    if cur.peek() == Some('0') {
        cur.bump();
        cur.skip_ws();
        if !cur.at_end() {
            return Err(cur.err("trailing characters after '0'"));
        }
        return Ok(ElementAst::default());
    }
    let mut ast = ElementAst::default();
    let mut negate = false;
    if cur.peek() == Some('-') {
        cur.bump();
        cur.skip_ws();
        negate = true;
    } else if cur.peek() == Some('+') {
        cur.bump();
        cur.skip_ws();
    }
    loop {
        let mut term = parse_term(&mut cur)?;
        if negate {
            term.coeff = -term.coeff;
        }
        ast.terms.push(term);
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some('+') => {
                cur.bump();
                negate = false;
            }
            Some('-') => {
                cur.bump();
                negate = true;
            }
            Some(c) => return Err(cur.err(format!("expected '+', '-', or end of input, found '{c}'"))),
        }
        cur.skip_ws();
    }
    Ok(ast)
}

/// Ties a parsed element to a concrete letter alphabet, producing the
/// canonical sparse element (terms may merge or cancel).
pub fn realize_element(
    ast: &ElementAst,
    alg: &WordAlgebra,
) -> Result<LambdaElement, CyclicError> {
    let mut out = LambdaElement::zero();
    let one = ncbv::scalar::qi(1);
    for term in &ast.terms {
        let word_refs: Vec<Vec<&str>> = term
            .words
            .iter()
            .map(|w| w.iter().map(|s| s.as_str()).collect())
            .collect();
        let word_slices: Vec<&[&str]> = word_refs.iter().map(|w| w.as_slice()).collect();
        let m = alg.lambda_monomial(term.gamma, term.nu, &word_slices, term.coeff.clone())?;
        out.add_scaled(&m, &one);
    }
    Ok(out)
}
