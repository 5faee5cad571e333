//! Exponential-polynomial terms `c * 2^(a*k + b*p + d*i + e*j + f)` and
//! linear predicates over the same variables.
//!
//! `k` is the column count, `p` the family parameter (written with the
//! family's own letter, e.g. `l`, `s` or `n`), `i` the rank index and `j` an
//! optional offset variable `i - base` used by range pieces.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {text:?}: {reason}")]
pub struct ParseError {
    pub text: String,
    pub reason: &'static str,
}

fn perr(text: &str, reason: &'static str) -> ParseError {
    ParseError {
        text: text.to_string(),
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Point {
    pub k: i64,
    pub p: i64,
    pub i: i64,
    pub j: i64,
}

impl Point {
    pub fn new(k: i64, p: i64, i: i64) -> Self {
        Self { k, p, i, j: 0 }
    }
}

/// `k*K + p*P + i*I + j*J + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Linear {
    pub k: i64,
    pub p: i64,
    pub i: i64,
    pub j: i64,
    pub c: i64,
}

impl Linear {
    pub const fn constant(c: i64) -> Self {
        Self {
            k: 0,
            p: 0,
            i: 0,
            j: 0,
            c,
        }
    }

    pub fn eval(&self, at: Point) -> i64 {
        self.k * at.k + self.p * at.p + self.i * at.i + self.j * at.j + self.c
    }

    pub fn is_constant(&self) -> bool {
        self.k == 0 && self.p == 0 && self.i == 0 && self.j == 0
    }

    fn scaled(self, s: i64) -> Self {
        Self {
            k: self.k * s,
            p: self.p * s,
            i: self.i * s,
            j: self.j * s,
            c: self.c * s,
        }
    }

    fn plus(self, o: Self) -> Self {
        Self {
            k: self.k + o.k,
            p: self.p + o.p,
            i: self.i + o.i,
            j: self.j + o.j,
            c: self.c + o.c,
        }
    }

    /// Substitutes `i` and `j` by constants, leaving `k` and `p` symbolic.
    pub fn bind_rank(&self, i: i64, j: i64) -> Self {
        Self {
            k: self.k,
            p: self.p,
            i: 0,
            j: 0,
            c: self.c + self.i * i + self.j * j,
        }
    }

    /// Substitutes `p` by a constant.
    pub fn bind_param(&self, p: i64) -> Self {
        Self {
            p: 0,
            c: self.c + self.p * p,
            ..*self
        }
    }

    pub fn parse(text: &str, param: char) -> Result<Self, ParseError> {
        let tokens = tokenize(text)?;
        let mut pos = 0;
        let e = parse_expr(&tokens, &mut pos, text, param)?;
        if pos != tokens.len() {
            return Err(perr(text, "trailing input"));
        }
        Ok(e)
    }

    pub fn display(&self, param: char) -> LinearDisplay {
        LinearDisplay(*self, param)
    }
}

pub struct LinearDisplay(Linear, char);

impl fmt::Display for LinearDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Linear { k, p, i, j, c } = self.0;
        let mut first = true;
        let mut put = |f: &mut fmt::Formatter<'_>, coef: i64, var: Option<char>| -> fmt::Result {
            if coef == 0 {
                return Ok(());
            }
            if coef < 0 {
                f.write_char('-')?;
            } else if !first {
                f.write_char('+')?;
            }
            let a = coef.unsigned_abs();
            match var {
                Some(v) if a == 1 => f.write_char(v)?,
                Some(v) => write!(f, "{a}{v}")?,
                None => write!(f, "{a}")?,
            }
            first = false;
            Ok(())
        };
        put(f, k, Some('k'))?;
        put(f, p, Some(self.1))?;
        put(f, i, Some('i'))?;
        put(f, j, Some('j'))?;
        put(f, c, None)?;
        if first {
            f.write_char('0')?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(i64),
    Var(char),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Tok>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' => {
                chars.next();
            }
            '0'..='9' => {
                let mut v: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(x) = d.to_digit(10) {
                        v = v
                            .checked_mul(10)
                            .and_then(|v| v.checked_add(x as i64))
                            .ok_or_else(|| perr(text, "number too large"))?;
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Num(v));
            }
            'a'..='z' => {
                out.push(Tok::Var(c));
                chars.next();
            }
            '+' => {
                out.push(Tok::Plus);
                chars.next();
            }
            '-' | '−' => {
                out.push(Tok::Minus);
                chars.next();
            }
            '*' | '·' => {
                out.push(Tok::Star);
                chars.next();
            }
            '^' => {
                out.push(Tok::Caret);
                chars.next();
            }
            '(' => {
                out.push(Tok::LParen);
                chars.next();
            }
            ')' => {
                out.push(Tok::RParen);
                chars.next();
            }
            _ => return Err(perr(text, "unexpected character")),
        }
    }
    Ok(out)
}

fn var_linear(v: char, param: char, text: &str) -> Result<Linear, ParseError> {
    let mut l = Linear::default();
    match v {
        'k' => l.k = 1,
        'i' => l.i = 1,
        'j' => l.j = 1,
        _ if v == param => l.p = 1,
        _ => return Err(perr(text, "unknown variable")),
    }
    Ok(l)
}

fn parse_expr(t: &[Tok], pos: &mut usize, text: &str, param: char) -> Result<Linear, ParseError> {
    let mut acc = Linear::default();
    let mut sign = 1;
    let mut expect_term = true;
    loop {
        match t.get(*pos) {
            Some(Tok::Plus) if expect_term && *pos == 0 => {
                *pos += 1;
            }
            Some(Tok::Minus) if expect_term => {
                sign = -sign;
                *pos += 1;
            }
            _ if expect_term => {
                let term = parse_lin_term(t, pos, text, param)?;
                acc = acc.plus(term.scaled(sign));
                sign = 1;
                expect_term = false;
            }
            Some(Tok::Plus) => {
                *pos += 1;
                expect_term = true;
            }
            Some(Tok::Minus) => {
                *pos += 1;
                sign = -1;
                expect_term = true;
            }
            _ => return Ok(acc),
        }
    }
}

fn parse_lin_term(
    t: &[Tok],
    pos: &mut usize,
    text: &str,
    param: char,
) -> Result<Linear, ParseError> {
    let mut coef = 1;
    let mut had_num = false;
    if let Some(Tok::Num(n)) = t.get(*pos) {
        coef = *n;
        had_num = true;
        *pos += 1;
        if t.get(*pos) == Some(&Tok::Star) {
            *pos += 1;
        } else if !matches!(t.get(*pos), Some(Tok::Var(_)) | Some(Tok::LParen)) {
            return Ok(Linear::constant(coef));
        }
    }
    let atom = match t.get(*pos) {
        Some(Tok::Var(v)) => {
            *pos += 1;
            var_linear(*v, param, text)?
        }
        Some(Tok::LParen) => {
            *pos += 1;
            let e = parse_expr(t, pos, text, param)?;
            if t.get(*pos) != Some(&Tok::RParen) {
                return Err(perr(text, "expected ')'"));
            }
            *pos += 1;
            e
        }
        _ if had_num => return Err(perr(text, "dangling '*'")),
        _ => return Err(perr(text, "expected a term")),
    };
    Ok(atom.scaled(coef))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Gt,
    Ge,
    Lt,
    Le,
}

impl Rel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
            Rel::Lt => "<",
            Rel::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    pub lhs: Linear,
    pub rel: Rel,
    pub rhs: Linear,
}

impl Condition {
    pub fn holds(&self, at: Point) -> bool {
        let (a, b) = (self.lhs.eval(at), self.rhs.eval(at));
        match self.rel {
            Rel::Eq => a == b,
            Rel::Gt => a > b,
            Rel::Ge => a >= b,
            Rel::Lt => a < b,
            Rel::Le => a <= b,
        }
    }

    pub fn parse(text: &str, param: char) -> Result<Self, ParseError> {
        let ops = [(">=", Rel::Ge), ("<=", Rel::Le), (">", Rel::Gt), ("<", Rel::Lt), ("=", Rel::Eq)];
        for (op, rel) in ops {
            if let Some(at) = text.find(op) {
                let lhs = Linear::parse(&text[..at], param)?;
                let rhs = Linear::parse(&text[at + op.len()..], param)?;
                return Ok(Self { lhs, rel, rhs });
            }
        }
        Err(perr(text, "expected a comparison"))
    }

    pub fn display(&self, param: char) -> String {
        alloc::format!(
            "{} {} {}",
            self.lhs.display(param),
            self.rel.as_str(),
            self.rhs.display(param)
        )
    }
}

/// `coef * 2^exp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymTerm {
    pub coef: BigInt,
    pub exp: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("exponent {exponent} is negative")]
pub struct NegativeExponent {
    pub exponent: i64,
}

impl SymTerm {
    pub fn eval(&self, at: Point) -> Result<BigInt, NegativeExponent> {
        let e = self.exp.eval(at);
        if e < 0 {
            return Err(NegativeExponent { exponent: e });
        }
        Ok(&self.coef << e as usize)
    }
}

/// Sum of terms evaluated at a point.
pub fn eval_terms(terms: &[SymTerm], at: Point) -> Result<BigInt, NegativeExponent> {
    let mut acc = BigInt::zero();
    for t in terms {
        acc += t.eval(at)?;
    }
    Ok(acc)
}

/// Parses `[-] term (('+'|'-') term)*` where `term` is a product of integer
/// factors and at most one power `2^atom`, e.g. `147*9*2^(k+3)` or `2^25`.
pub fn parse_terms(text: &str, param: char) -> Result<Vec<SymTerm>, ParseError> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let mut out = Vec::new();
    let mut sign = 1i64;
    loop {
        while let Some(tok) = tokens.get(pos) {
            match tok {
                Tok::Minus => sign = -sign,
                Tok::Plus => {}
                _ => break,
            }
            pos += 1;
        }
        if pos >= tokens.len() {
            return Err(perr(text, "expected a term"));
        }
        let mut coef = BigInt::from(sign);
        let mut exp: Option<Linear> = None;
        loop {
            match tokens.get(pos) {
                Some(Tok::Num(2)) if tokens.get(pos + 1) == Some(&Tok::Caret) => {
                    if exp.is_some() {
                        return Err(perr(text, "two powers of 2 in one term"));
                    }
                    pos += 2;
                    exp = Some(match tokens.get(pos) {
                        Some(Tok::Num(n)) => {
                            pos += 1;
                            Linear::constant(*n)
                        }
                        Some(Tok::Var(v)) => {
                            pos += 1;
                            var_linear(*v, param, text)?
                        }
                        Some(Tok::LParen) => {
                            pos += 1;
                            let e = parse_expr(&tokens, &mut pos, text, param)?;
                            if tokens.get(pos) != Some(&Tok::RParen) {
                                return Err(perr(text, "expected ')'"));
                            }
                            pos += 1;
                            e
                        }
                        _ => return Err(perr(text, "bad exponent")),
                    });
                }
                Some(Tok::Num(n)) => {
                    coef *= *n;
                    pos += 1;
                }
                _ => return Err(perr(text, "expected a factor")),
            }
            if tokens.get(pos) == Some(&Tok::Star) {
                pos += 1;
            } else {
                break;
            }
        }
        out.push(SymTerm {
            coef,
            exp: exp.unwrap_or_default(),
        });
        sign = 1;
        match tokens.get(pos) {
            None => return Ok(out),
            Some(Tok::Plus) | Some(Tok::Minus) => {}
            Some(_) => return Err(perr(text, "expected '+' or '-'")),
        }
    }
}

/// Renders a term list in the same syntax [`parse_terms`] reads.
pub fn display_terms(terms: &[SymTerm], param: char) -> String {
    let mut out = String::new();
    for (n, t) in terms.iter().enumerate() {
        let neg = t.coef.sign() == Sign::Minus;
        if n == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mag = t.coef.abs();
        let has_pow = t.exp != Linear::default();
        if !has_pow {
            let _ = write!(out, "{mag}");
            continue;
        }
        if !mag.is_one() {
            let _ = write!(out, "{mag}*");
        }
        if t.exp.is_constant() {
            let _ = write!(out, "2^{}", t.exp.c);
        } else {
            let _ = write!(out, "2^({})", t.exp.display(param));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Groups terms whose exponents are all of the form `a*k + const` by `a`,
/// giving `sum_a (coefficient_a) * 2^(a*k)` with exact big-integer
/// coefficients. Requires every constant part to be nonnegative.
pub fn collect_by_k(terms: &[SymTerm]) -> Result<Vec<(i64, BigInt)>, NegativeExponent> {
    let mut out: Vec<(i64, BigInt)> = Vec::new();
    for t in terms {
        debug_assert!(t.exp.p == 0 && t.exp.i == 0 && t.exp.j == 0);
        if t.exp.c < 0 {
            return Err(NegativeExponent { exponent: t.exp.c });
        }
        let v = &t.coef << t.exp.c as usize;
        match out.iter_mut().find(|(a, _)| *a == t.exp.k) {
            Some((_, acc)) => *acc += v,
            None => out.push((t.exp.k, v)),
        }
    }
    out.retain(|(_, c)| !c.is_zero());
    out.sort_by_key(|(a, _)| -*a);
    Ok(out)
}

/// Converts a nonnegative [`BigInt`] into a [`BigUint`].
pub fn to_unsigned(v: &BigInt) -> Option<BigUint> {
    v.to_biguint()
}
