//! Algebra sources for the command line: built-in names (`xi`, `matrix:n`,
//! `tensor:a,b`) and a line-oriented structured text file format declaring
//! a basis with parities, the unit, sparse multiplication triples, sparse
//! differential and pairing entries, and the declared pairing parity.
//!
//! File grammar, one directive per line (`#` starts a comment):
//!
//! ```text
//! basis       <name> <even|odd>
//! unit        <name>
//! mult        <left> <right> <out> <rational>
//! diff        <from> <to> <rational>
//! form        <left> <right> <rational>
//! form-parity <even|odd>
//! ```

use crate::parse::ParseError;
use ncbv::frobenius::{
    matrix_algebra, tensor_algebras, xi_algebra, DgFrobeniusAlgebra, FrobeniusError,
};
use ncbv::graded::{GradedBasis, Parity};
use ncbv::scalar::Q;
use std::collections::HashSet;
use std::fmt;

/// Why an algebra could not be produced from its spec string.
#[derive(Debug)]
pub enum AlgebraError {
    /// Malformed file or builtin spec: a usage problem (exit 2).
    Parse(ParseError),
    /// Unreadable file or unrecognized builtin shape (exit 2).
    Usage(String),
    /// The tables parsed but the structure was rejected (exit 1).
    Build(FrobeniusError),
}

impl fmt::Display for AlgebraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraError::Parse(e) => write!(f, "{e}"),
            AlgebraError::Usage(m) => write!(f, "{m}"),
            AlgebraError::Build(e) => write!(f, "algebra rejected: {e}"),
        }
    }
}

impl std::error::Error for AlgebraError {}

fn builtin_component(spec: &str) -> Result<DgFrobeniusAlgebra, AlgebraError> {
    if spec == "xi" {
        return Ok(xi_algebra());
    }
    if let Some(n) = spec.strip_prefix("matrix:") {
        let n: usize = n
            .parse()
            .map_err(|_| AlgebraError::Usage(format!("bad matrix size '{n}'")))?;
        if n == 0 {
            return Err(AlgebraError::Usage(
                "matrix size must be at least 1".to_string(),
            ));
        }
        return matrix_algebra(n).map_err(AlgebraError::Build);
    }
    Err(AlgebraError::Usage(format!(
        "unknown built-in algebra '{spec}' (expected 'xi' or 'matrix:n')"
    )))
}

/// Resolves an algebra spec: a built-in name, a tensor of built-ins, or a
/// path to a config file.
pub fn resolve_algebra(spec: &str) -> Result<DgFrobeniusAlgebra, AlgebraError> {
    if spec == "xi" || spec.starts_with("matrix:") {
        return builtin_component(spec);
    }
    if let Some(rest) = spec.strip_prefix("tensor:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() < 2 {
            return Err(AlgebraError::Usage(
                "tensor spec needs at least two comma-separated components".to_string(),
            ));
        }
        let mut acc = builtin_component(parts[0])?;
        for part in &parts[1..] {
            let next = builtin_component(part)?;
            acc = tensor_algebras(&acc, &next).map_err(AlgebraError::Build)?;
        }
        return Ok(acc);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| AlgebraError::Usage(format!("cannot read '{spec}': {e}")))?;
    parse_algebra_config(&text)
}

struct Token {
    text: String,
    col: usize,
}

fn tokenize_line(line: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    for (i, c) in line.chars().enumerate() {
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            if !current.is_empty() {
                out.push(Token {
                    text: std::mem::take(&mut current),
                    col: start + 1,
                });
            }
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    if !current.is_empty() {
        out.push(Token {
            text: current,
            col: start + 1,
        });
    }
    out
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> AlgebraError {
    AlgebraError::Parse(ParseError {
        line,
        col,
        msg: msg.into(),
    })
}

fn parity_token(tok: &Token, line: usize) -> Result<Parity, AlgebraError> {
    match tok.text.as_str() {
        "even" => Ok(Parity::Even),
        "odd" => Ok(Parity::Odd),
        other => Err(perr(
            line,
            tok.col,
            format!("expected 'even' or 'odd', found '{other}'"),
        )),
    }
}

fn rational_token(tok: &Token, line: usize) -> Result<Q, AlgebraError> {
    crate::parse::rational_from_str(&tok.text).map_err(|e| {
        perr(
            line,
            tok.col + e.col - 1,
            format!("bad rational '{}': {}", tok.text, e.msg),
        )
    })
}

fn known_name<'a>(
    tok: &'a Token,
    names: &HashSet<String>,
    line: usize,
) -> Result<&'a str, AlgebraError> {
    if names.contains(&tok.text) {
        Ok(&tok.text)
    } else {
        Err(perr(
            line,
            tok.col,
            format!("unknown basis name '{}'", tok.text),
        ))
    }
}

/// Parses the structured text format and assembles the algebra.
pub fn parse_algebra_config(text: &str) -> Result<DgFrobeniusAlgebra, AlgebraError> {
    let mut basis: Vec<(String, Parity)> = Vec::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut unit: Option<String> = None;
    let mut mult: Vec<(String, String, String, Q)> = Vec::new();
    let mut diff: Vec<(String, String, Q)> = Vec::new();
    let mut form: Vec<(String, String, Q)> = Vec::new();
    let mut form_parity: Option<Parity> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let toks = tokenize_line(raw);
        if toks.is_empty() {
            continue;
        }
        let arity = |want: usize| -> Result<(), AlgebraError> {
            if toks.len() != want + 1 {
                Err(perr(
                    line,
                    toks[0].col,
                    format!(
                        "'{}' takes {} arguments, found {}",
                        toks[0].text,
                        want,
                        toks.len() - 1
                    ),
                ))
            } else {
                Ok(())
            }
        };
        match toks[0].text.as_str() {
            "basis" => {
                arity(2)?;
                let name = toks[1].text.clone();
                if !names.insert(name.clone()) {
                    return Err(perr(
                        line,
                        toks[1].col,
                        format!("duplicate basis name '{name}'"),
                    ));
                }
                let p = parity_token(&toks[2], line)?;
                basis.push((name, p));
            }
            "unit" => {
                arity(1)?;
                if unit.is_some() {
                    return Err(perr(line, toks[0].col, "unit declared twice"));
                }
                unit = Some(known_name(&toks[1], &names, line)?.to_string());
            }
            "mult" => {
                arity(4)?;
                let a = known_name(&toks[1], &names, line)?.to_string();
                let b = known_name(&toks[2], &names, line)?.to_string();
                let c = known_name(&toks[3], &names, line)?.to_string();
                let q = rational_token(&toks[4], line)?;
                mult.push((a, b, c, q));
            }
            "diff" => {
                arity(3)?;
                let a = known_name(&toks[1], &names, line)?.to_string();
                let b = known_name(&toks[2], &names, line)?.to_string();
                let q = rational_token(&toks[3], line)?;
                diff.push((a, b, q));
            }
            "form" => {
                arity(3)?;
                let a = known_name(&toks[1], &names, line)?.to_string();
                let b = known_name(&toks[2], &names, line)?.to_string();
                let q = rational_token(&toks[3], line)?;
                form.push((a, b, q));
            }
            "form-parity" => {
                arity(1)?;
                if form_parity.is_some() {
                    return Err(perr(line, toks[0].col, "form-parity declared twice"));
                }
                form_parity = Some(parity_token(&toks[1], line)?);
            }
            other => {
                return Err(perr(
                    line,
                    toks[0].col,
                    format!(
                        "unknown directive '{other}' (expected basis, unit, mult, diff, form, or form-parity)"
                    ),
                ));
            }
        }
    }

    if basis.is_empty() {
        return Err(perr(1, 1, "no basis declared"));
    }
    let unit = unit.ok_or_else(|| perr(1, 1, "no unit declared"))?;
    let form_parity = form_parity.ok_or_else(|| perr(1, 1, "no form-parity declared"))?;

    let pairs: Vec<(&str, Parity)> = basis.iter().map(|(n, p)| (n.as_str(), *p)).collect();
    let gb = GradedBasis::from_pairs(&pairs).map_err(|e| {
        AlgebraError::Usage(format!("basis rejected: {e}"))
    })?;
    let mult_refs: Vec<(&str, &str, &str, Q)> = mult
        .iter()
        .map(|(a, b, c, q)| (a.as_str(), b.as_str(), c.as_str(), q.clone()))
        .collect();
    let diff_refs: Vec<(&str, &str, Q)> = diff
        .iter()
        .map(|(a, b, q)| (a.as_str(), b.as_str(), q.clone()))
        .collect();
    let form_refs: Vec<(&str, &str, Q)> = form
        .iter()
        .map(|(a, b, q)| (a.as_str(), b.as_str(), q.clone()))
        .collect();
    DgFrobeniusAlgebra::new(gb, &unit, &mult_refs, &diff_refs, &form_refs, form_parity)
        .map_err(AlgebraError::Build)
}
