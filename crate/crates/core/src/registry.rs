//! Piecewise closed forms for rank distributions, loaded from a text data
//! file (see `data/families.txt` for the syntax).

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};

use crate::dist::{pow2, DistError, RankDistribution, Source};
use crate::shape::{BlockKind, BlockSpec, ShapeError, StackedShape};
use crate::symbolic::{
    collect_by_k, display_terms, eval_terms, parse_terms, Condition, Linear, ParseError, Point,
    SymTerm,
};

/// The family data shipped with the crate.
pub const BUILTIN_DATA: &str = include_str!("../data/families.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("family {family} needs a value for its parameter {param}")]
    ParamRequired { family: String, param: char },
    #[error("family {family} takes no parameter")]
    UnexpectedParam { family: String },
    #[error("family {family}: {param}={value} is outside its range")]
    ParamOutOfRange {
        family: String,
        param: char,
        value: i64,
    },
    #[error("family {family} is only defined for k={expected}")]
    FixedColumns { family: String, expected: i64 },
    #[error("family {family} has no formula for rank {i} at k={k}{}", fmt_param(*.l))]
    OutOfValidity {
        family: String,
        k: i64,
        l: Option<i64>,
        i: usize,
    },
    #[error("family {family}: rank {i} at k={k} is covered by pieces on lines {lines:?}")]
    Ambiguous {
        family: String,
        k: i64,
        i: usize,
        lines: Vec<usize>,
    },
    #[error("family {family}: rank {i} evaluates to the negative value {value}")]
    NegativeCount {
        family: String,
        i: usize,
        value: BigInt,
    },
    #[error("family {family}: piece on line {line} has negative exponent {exponent}")]
    NegativeExponent {
        family: String,
        line: usize,
        exponent: i64,
    },
    #[error("family {family}: {source}")]
    Mass { family: String, source: DistError },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

fn fmt_param(l: Option<i64>) -> String {
    match l {
        Some(v) => alloc::format!(", parameter {v}"),
        None => String::new(),
    }
}

/// One block of a shape template; `repeat` copies persymmetric blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBlock {
    pub kind: BlockKind,
    pub rows: Linear,
    pub repeat: Option<Linear>,
}

/// A shape whose row counts and column count may depend on `k` and `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTemplate {
    pub cols: Linear,
    pub blocks: Vec<TemplateBlock>,
    text: String,
}

impl ShapeTemplate {
    pub fn parse(text: &str, param: char) -> Result<Self, ParseError> {
        let bad = |reason| ParseError {
            text: text.to_string(),
            reason,
        };
        let open = text.strip_prefix('[').ok_or_else(|| bad("expected '['"))?;
        let close = open.rfind(']').ok_or_else(|| bad("expected ']'"))?;
        let cols_text = open[close + 1..]
            .strip_prefix('x')
            .ok_or_else(|| bad("expected 'x' after ']'"))?;
        let cols = Linear::parse(cols_text, param)?;
        let mut blocks = Vec::new();
        for part in open[..close].split(';') {
            let part = part.trim();
            let block = if let Some(inner) = part.strip_prefix('(') {
                let inner = inner.strip_suffix(')').ok_or_else(|| bad("unclosed '('"))?;
                TemplateBlock {
                    kind: BlockKind::Free,
                    rows: Linear::parse(inner, param)?,
                    repeat: None,
                }
            } else if let Some((rows, times)) = part.split_once('^') {
                TemplateBlock {
                    kind: BlockKind::Persymmetric,
                    rows: Linear::parse(rows, param)?,
                    repeat: Some(Linear::parse(times, param)?),
                }
            } else {
                TemplateBlock {
                    kind: BlockKind::Persymmetric,
                    rows: Linear::parse(part, param)?,
                    repeat: None,
                }
            };
            blocks.push(block);
        }
        Ok(Self {
            cols,
            blocks,
            text: text.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// The fixed column count, if the template does not depend on `k`.
    pub fn fixed_cols(&self) -> Option<i64> {
        (self.cols.k == 0 && self.cols.p == 0).then_some(self.cols.c)
    }

    fn at(k: i64, p: i64) -> Point {
        Point::new(k, p, 0)
    }

    pub fn instantiate(&self, k: i64, p: i64) -> Result<StackedShape, ShapeError> {
        let at = Self::at(k, p);
        let cols = self.cols.eval(at);
        let mut blocks = Vec::new();
        for (index, b) in self.blocks.iter().enumerate() {
            let rows = b.rows.eval(at);
            if rows < 1 {
                return Err(ShapeError::ZeroRows { index });
            }
            let copies = b.repeat.map_or(1, |r| r.eval(at));
            for _ in 0..copies.max(0) {
                blocks.push(match b.kind {
                    BlockKind::Persymmetric => BlockSpec::persymmetric(rows as usize),
                    BlockKind::Free => BlockSpec::free(rows as usize),
                });
            }
        }
        if cols < 1 {
            return Err(ShapeError::ZeroCols);
        }
        StackedShape::new(cols as usize, blocks)
    }

    /// Total rows at parameter `p` (independent of `k`).
    pub fn total_rows(&self, p: i64) -> i64 {
        let at = Self::at(0, p);
        self.blocks
            .iter()
            .map(|b| b.rows.eval(at) * b.repeat.map_or(1, |r| r.eval(at)))
            .sum()
    }

    /// `(a, b)` with `free_param_count = a*k + b` at parameter `p`, assuming
    /// the template has `x k` columns.
    pub fn param_count_linear(&self, p: i64) -> (i64, i64) {
        let at = Self::at(0, p);
        let (mut a, mut b) = (0, 0);
        for blk in &self.blocks {
            let rows = blk.rows.eval(at);
            let copies = blk.repeat.map_or(1, |r| r.eval(at));
            match blk.kind {
                BlockKind::Persymmetric => {
                    a += copies;
                    b += copies * (rows - 1);
                }
                BlockKind::Free => a += copies * rows,
            }
        }
        (a, b)
    }
}

/// Rank-distribution class of a shape: block order is irrelevant and a
/// one-row persymmetric block is a free row.
pub fn rank_class(shape: &StackedShape) -> (usize, Vec<usize>, usize) {
    let mut persym = Vec::new();
    let mut free = 0;
    for b in shape.blocks() {
        match b.kind {
            BlockKind::Persymmetric if b.rows > 1 => persym.push(b.rows),
            _ => free += b.rows,
        }
    }
    persym.sort_unstable();
    (shape.cols(), persym, free)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankSelector {
    Fixed(Linear),
    /// `lo..=hi`; when `base` is set, `j = i - base`.
    Range {
        lo: Linear,
        hi: Linear,
        base: Option<Linear>,
    },
}

impl RankSelector {
    /// `Some(j)` when rank `i` is selected at `(k, p)`.
    fn select(&self, k: i64, p: i64, i: i64) -> Option<i64> {
        let at = Point::new(k, p, 0);
        match self {
            RankSelector::Fixed(e) => (e.eval(at) == i).then_some(0),
            RankSelector::Range { lo, hi, base } => {
                let (lo, hi) = (lo.eval(at), hi.eval(at));
                if i < lo || i > hi {
                    return None;
                }
                Some(base.map_or(0, |b| i - b.eval(at)))
            }
        }
    }

    fn parse(text: &str, param: char) -> Result<Self, ParseError> {
        let bad = |reason| ParseError {
            text: text.to_string(),
            reason,
        };
        let rest = text
            .trim()
            .strip_prefix("i=")
            .ok_or_else(|| bad("rank selector must start with i="))?;
        if let Some((head, range)) = rest.split_once(',') {
            // i=B+j, j=LO..HI
            let base_expr = Linear::parse(head, param)?;
            if base_expr.j != 1 || base_expr.i != 0 {
                return Err(bad("offset selector must read i=B+j"));
            }
            let base = Linear { j: 0, ..base_expr };
            let range = range
                .trim()
                .strip_prefix("j=")
                .ok_or_else(|| bad("expected j=LO..HI"))?;
            let (lo, hi) = range.split_once("..").ok_or_else(|| bad("expected '..'"))?;
            let (lo, hi) = (Linear::parse(lo, param)?, Linear::parse(hi, param)?);
            return Ok(RankSelector::Range {
                lo: add(base, lo),
                hi: add(base, hi),
                base: Some(base),
            });
        }
        if let Some((lo, hi)) = rest.split_once("..") {
            return Ok(RankSelector::Range {
                lo: Linear::parse(lo, param)?,
                hi: Linear::parse(hi, param)?,
                base: None,
            });
        }
        Ok(RankSelector::Fixed(Linear::parse(rest, param)?))
    }

    pub fn display(&self, param: char) -> String {
        match self {
            RankSelector::Fixed(e) => alloc::format!("i = {}", e.display(param)),
            RankSelector::Range { lo, hi, base: None } => {
                alloc::format!("{} <= i <= {}", lo.display(param), hi.display(param))
            }
            RankSelector::Range {
                lo,
                hi,
                base: Some(b),
            } => alloc::format!(
                "i = {} + j, {} <= j <= {}",
                b.display(param),
                sub(*lo, *b).display(param),
                sub(*hi, *b).display(param)
            ),
        }
    }
}

fn add(a: Linear, b: Linear) -> Linear {
    Linear {
        k: a.k + b.k,
        p: a.p + b.p,
        i: a.i + b.i,
        j: a.j + b.j,
        c: a.c + b.c,
    }
}

fn sub(a: Linear, b: Linear) -> Linear {
    Linear {
        k: a.k - b.k,
        p: a.p - b.p,
        i: a.i - b.i,
        j: a.j - b.j,
        c: a.c - b.c,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaPiece {
    pub selector: RankSelector,
    pub conditions: Vec<Condition>,
    pub terms: Vec<SymTerm>,
    pub anchor: String,
    /// Line in the data file.
    pub line: usize,
}

impl FormulaPiece {
    /// `Some(point)` when this piece covers rank `i` at `(k, p)`.
    fn covers(&self, k: i64, p: i64, i: i64) -> Option<Point> {
        let j = self.selector.select(k, p, i)?;
        let at = Point { k, p, i, j };
        self.conditions.iter().all(|c| c.holds(at)).then_some(at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryTable {
    pub k: i64,
    pub p: Option<i64>,
    pub counts: Vec<BigUint>,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRange {
    pub name: char,
    pub min: i64,
    pub max: Option<i64>,
}

impl ParamRange {
    pub fn contains(&self, v: i64) -> bool {
        v >= self.min && self.max.is_none_or(|m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypoNote {
    pub family: String,
    pub location: String,
    pub printed: String,
    pub stored: String,
    pub basis: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub id: String,
    pub about: String,
    pub template: ShapeTemplate,
    pub param: Option<ParamRange>,
    pub complete_top: bool,
    pub fallback: Option<String>,
    pub pieces: Vec<FormulaPiece>,
    pub tables: Vec<BoundaryTable>,
}

impl Family {
    pub fn param_name(&self) -> char {
        self.param.as_ref().map_or('l', |p| p.name)
    }

    fn table_at(&self, k: i64, p: Option<i64>) -> Option<&BoundaryTable> {
        self.tables.iter().find(|t| t.k == k && t.p == p)
    }
}

/// How a distribution was assembled by [`Registry::eval_family`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankOrigin {
    Table { anchor: String },
    Piece { line: usize, anchor: String },
    Complement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// The family that produced the values (after any fallback).
    pub family: String,
    pub shape: StackedShape,
    pub dist: RankDistribution,
    pub origins: Vec<RankOrigin>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub version: u32,
    families: Vec<Family>,
    typos: Vec<TypoNote>,
}

/// Whether tables may override pieces during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TablePolicy {
    Prefer,
    Ignore,
}

impl Registry {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_DATA).expect("built-in family data parses")
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Registry {
            version: 0,
            families: Vec::new(),
            typos: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |message: String| RegistryError::Data { line, message };
            let perr = |e: ParseError| err(e.to_string());
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if let Some(rest) = content.strip_prefix("@version") {
                reg.version = rest.trim().parse().map_err(|_| err("bad version".into()))?;
            } else if let Some(rest) = content.strip_prefix("@family") {
                let fam = parse_family_header(rest).map_err(err)?;
                if reg.family(&fam.id).is_some() {
                    return Err(err(alloc::format!("duplicate family {}", fam.id)));
                }
                reg.families.push(fam);
            } else if let Some(rest) = content.strip_prefix("@about") {
                let f = fields(rest);
                let fam = reg.family_mut(f[0]).ok_or_else(|| err("unknown family".into()))?;
                fam.about = f.get(1).copied().unwrap_or("").to_owned();
            } else if let Some(rest) = content.strip_prefix("@table") {
                let f = fields(rest);
                if f.len() < 3 {
                    return Err(err("table needs id | point | counts".into()));
                }
                let fam = reg.family_mut(f[0]).ok_or_else(|| err("unknown family".into()))?;
                let (k, p) = parse_point(f[1], fam.param_name()).map_err(err)?;
                let counts = f[2]
                    .split(',')
                    .map(|c| c.trim().parse::<BigUint>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| err("bad count".into()))?;
                fam.tables.push(BoundaryTable {
                    k,
                    p,
                    counts,
                    anchor: f.get(3).copied().unwrap_or("").to_owned(),
                });
            } else if let Some(rest) = content.strip_prefix("@typo") {
                let f = fields(rest);
                if f.len() != 5 {
                    return Err(err("typo needs five fields".into()));
                }
                if reg.family(f[0]).is_none() {
                    return Err(err("unknown family".into()));
                }
                let strip = |s: &str, tag: &str| s.strip_prefix(tag).map(|v| v.trim().to_owned());
                reg.typos.push(TypoNote {
                    family: f[0].to_owned(),
                    location: f[1].to_owned(),
                    printed: strip(f[2], "printed:").ok_or_else(|| err("expected printed:".into()))?,
                    stored: strip(f[3], "stored:").ok_or_else(|| err("expected stored:".into()))?,
                    basis: f[4].to_owned(),
                });
            } else if content.starts_with('@') {
                return Err(err("unknown directive".into()));
            } else {
                let f = fields(content);
                if f.len() != 5 {
                    return Err(err("piece needs five fields".into()));
                }
                let fam = reg.family_mut(f[0]).ok_or_else(|| err("unknown family".into()))?;
                let param = fam.param_name();
                let conditions = if f[2] == "-" {
                    Vec::new()
                } else {
                    f[2].split(',')
                        .map(|c| Condition::parse(c.trim(), param))
                        .collect::<Result<_, _>>()
                        .map_err(perr)?
                };
                fam.pieces.push(FormulaPiece {
                    selector: RankSelector::parse(f[1], param).map_err(perr)?,
                    conditions,
                    terms: parse_terms(f[3], param).map_err(perr)?,
                    anchor: f[4].to_owned(),
                    line,
                });
            }
        }
        for fam in &reg.families {
            if let Some(fb) = &fam.fallback {
                if reg.family(fb).is_none() {
                    return Err(RegistryError::UnknownFamily(fb.clone()));
                }
            }
        }
        Ok(reg)
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn typos(&self) -> &[TypoNote] {
        &self.typos
    }

    pub fn family(&self, id: &str) -> Option<&Family> {
        self.families.iter().find(|f| f.id == id)
    }

    fn family_mut(&mut self, id: &str) -> Option<&mut Family> {
        self.families.iter_mut().find(|f| f.id == id)
    }

    fn get(&self, id: &str) -> Result<&Family, RegistryError> {
        self.family(id)
            .ok_or_else(|| RegistryError::UnknownFamily(id.to_owned()))
    }

    /// Resolves the parameter (following fallbacks) and fixed columns.
    fn resolve(&self, id: &str, k: i64, p: Option<i64>) -> Result<(&Family, i64), RegistryError> {
        let fam = self.get(id)?;
        if let Some(expected) = fam.template.fixed_cols() {
            if k != expected {
                return Err(RegistryError::FixedColumns {
                    family: fam.id.clone(),
                    expected,
                });
            }
        }
        match (&fam.param, p) {
            (None, None) => Ok((fam, 0)),
            (None, Some(_)) => Err(RegistryError::UnexpectedParam {
                family: fam.id.clone(),
            }),
            (Some(r), None) => Err(RegistryError::ParamRequired {
                family: fam.id.clone(),
                param: r.name,
            }),
            (Some(r), Some(v)) if r.contains(v) => Ok((fam, v)),
            (Some(r), Some(v)) => match &fam.fallback {
                Some(fb) if r.max.is_some_and(|m| v > m) => self.resolve(fb, k, Some(v)),
                _ => Err(RegistryError::ParamOutOfRange {
                    family: fam.id.clone(),
                    param: r.name,
                    value: v,
                }),
            },
        }
    }

    /// The closed-form distribution of family `id` at `(k, p)`.
    pub fn eval_family(
        &self,
        id: &str,
        k: i64,
        p: Option<i64>,
    ) -> Result<RankDistribution, RegistryError> {
        Ok(self.evaluate(id, k, p, TablePolicy::Prefer)?.dist)
    }

    pub fn evaluate(
        &self,
        id: &str,
        k: i64,
        p: Option<i64>,
        tables: TablePolicy,
    ) -> Result<Evaluation, RegistryError> {
        let (fam, pv) = self.resolve(id, k, p)?;
        let shape = fam.template.instantiate(k, pv)?;
        let pkey = fam.param.as_ref().map(|_| pv);
        let mass_err = |source| RegistryError::Mass {
            family: fam.id.clone(),
            source,
        };
        if tables == TablePolicy::Prefer {
            if let Some(t) = fam.table_at(k, pkey) {
                let dist = RankDistribution::new(&shape, t.counts.clone(), Source::ClosedForm)
                    .map_err(mass_err)?;
                let origins = alloc::vec![RankOrigin::Table { anchor: t.anchor.clone() }; t.counts.len()];
                return Ok(Evaluation {
                    family: fam.id.clone(),
                    shape,
                    dist,
                    origins,
                });
            }
        }
        let top = shape.max_rank();
        let mut counts = Vec::with_capacity(top + 1);
        let mut origins = Vec::with_capacity(top + 1);
        let mut missing_top = false;
        for i in 0..=top {
            let hits: Vec<(&FormulaPiece, Point)> = fam
                .pieces
                .iter()
                .filter_map(|pc| pc.covers(k, pv, i as i64).map(|at| (pc, at)))
                .collect();
            match hits.as_slice() {
                [] if fam.complete_top && i == top => {
                    missing_top = true;
                    counts.push(BigUint::zero());
                    origins.push(RankOrigin::Complement);
                }
                [] => {
                    return Err(RegistryError::OutOfValidity {
                        family: fam.id.clone(),
                        k,
                        l: pkey,
                        i,
                    })
                }
                [(pc, at)] => {
                    let v = eval_terms(&pc.terms, *at).map_err(|e| {
                        RegistryError::NegativeExponent {
                            family: fam.id.clone(),
                            line: pc.line,
                            exponent: e.exponent,
                        }
                    })?;
                    if v.is_negative() {
                        return Err(RegistryError::NegativeCount {
                            family: fam.id.clone(),
                            i,
                            value: v,
                        });
                    }
                    counts.push(v.to_biguint().expect("nonnegative"));
                    origins.push(RankOrigin::Piece {
                        line: pc.line,
                        anchor: pc.anchor.clone(),
                    });
                }
                many => {
                    return Err(RegistryError::Ambiguous {
                        family: fam.id.clone(),
                        k,
                        i,
                        lines: many.iter().map(|(pc, _)| pc.line).collect(),
                    })
                }
            }
        }
        if missing_top {
            let total = pow2(shape.free_param_count());
            let rest: BigUint = counts.iter().sum();
            if rest > total {
                return Err(RegistryError::NegativeCount {
                    family: fam.id.clone(),
                    i: top,
                    value: BigInt::from(total) - BigInt::from(rest),
                });
            }
            counts[top] = total - rest;
        }
        let dist = RankDistribution::new(&shape, counts, Source::ClosedForm).map_err(mass_err)?;
        Ok(Evaluation {
            family: fam.id.clone(),
            shape,
            dist,
            origins,
        })
    }

    /// A single count, `Γ_i` of family `id` at `(k, p)`.
    pub fn eval_rank(
        &self,
        id: &str,
        k: i64,
        p: Option<i64>,
        i: usize,
    ) -> Result<BigUint, RegistryError> {
        Ok(self.eval_family(id, k, p)?.get(i))
    }

    /// Every `(family, k, p)` whose instance has the same rank class as
    /// `shape`, in data-file order.
    pub fn lookup_shape(&self, shape: &StackedShape) -> Vec<(&Family, i64, Option<i64>)> {
        let class = rank_class(shape);
        let k = shape.cols() as i64;
        let mut out = Vec::new();
        for fam in &self.families {
            if fam.template.fixed_cols().is_some_and(|c| c != k) {
                continue;
            }
            match &fam.param {
                None => {
                    if fam
                        .template
                        .instantiate(k, 0)
                        .is_ok_and(|s| rank_class(&s) == class)
                    {
                        out.push((fam, k, None));
                    }
                }
                Some(r) => {
                    let hi = r.max.unwrap_or(shape.total_rows() as i64 + 1);
                    for v in r.min..=hi {
                        if fam
                            .template
                            .instantiate(k, v)
                            .is_ok_and(|s| rank_class(&s) == class)
                        {
                            out.push((fam, k, Some(v)));
                        }
                    }
                }
            }
        }
        out
    }

    /// The first closed form that evaluates for `shape`.
    pub fn eval_shape(&self, shape: &StackedShape) -> Result<Evaluation, RegistryError> {
        let mut last = None;
        for (fam, k, p) in self.lookup_shape(shape) {
            match self.evaluate(&fam.id, k, p, TablePolicy::Prefer) {
                Ok(mut e) => {
                    e.dist = RankDistribution::new(shape, e.dist.into_counts(), Source::ClosedForm)
                        .map_err(|source| RegistryError::Mass {
                            family: fam.id.clone(),
                            source,
                        })?;
                    e.shape = shape.clone();
                    return Ok(e);
                }
                Err(err) => last = Some(err),
            }
        }
        Err(last.unwrap_or_else(|| RegistryError::UnknownFamily(shape.canonical_string())))
    }

    /// Residual of the mass identity `sum_i Γ_i(k) = 2^{params(k)}` as an
    /// exponential polynomial in `k`, for a family with `x k` columns at
    /// fixed parameter `p`, using the pieces valid for all large `k`.
    /// An empty result means the identity holds symbolically.
    pub fn symbolic_mass_residual(
        &self,
        id: &str,
        p: Option<i64>,
    ) -> Result<Vec<(i64, BigInt)>, RegistryError> {
        let fam = self.get(id)?;
        let pv = p.unwrap_or(0);
        let rows = fam.template.total_rows(pv);
        let far = 10 * rows + 200;
        let mut terms: Vec<SymTerm> = Vec::new();
        for i in 0..=rows {
            let pick = |k: i64| -> Vec<(&FormulaPiece, Point)> {
                fam.pieces
                    .iter()
                    .filter_map(|pc| pc.covers(k, pv, i).map(|at| (pc, at)))
                    .collect()
            };
            let (a, b) = (pick(far), pick(far + 1));
            match (a.as_slice(), b.as_slice()) {
                ([(pa, at)], [(pb, _)]) if pa.line == pb.line => {
                    for t in &pa.terms {
                        terms.push(SymTerm {
                            coef: t.coef.clone(),
                            exp: t.exp.bind_rank(at.i, at.j).bind_param(pv),
                        });
                    }
                }
                _ => {
                    return Err(RegistryError::OutOfValidity {
                        family: fam.id.clone(),
                        k: far,
                        l: p,
                        i: i as usize,
                    })
                }
            }
        }
        let (a, b) = fam.template.param_count_linear(pv);
        terms.push(SymTerm {
            coef: BigInt::from(-1),
            exp: Linear {
                k: a,
                c: b,
                ..Default::default()
            },
        });
        collect_by_k(&terms).map_err(|e| RegistryError::NegativeExponent {
            family: fam.id.clone(),
            line: 0,
            exponent: e.exponent,
        })
    }

    /// Pieces of `id` covering rank `i` somewhere, rendered as text.
    pub fn render_symbolic(&self, id: &str, p: Option<i64>) -> Result<String, RegistryError> {
        let fam = self.get(id)?;
        let param = fam.param_name();
        let mut out = String::new();
        let bind = |terms: &[SymTerm]| -> Vec<SymTerm> {
            terms
                .iter()
                .map(|t| SymTerm {
                    coef: t.coef.clone(),
                    exp: p.map_or(t.exp, |v| t.exp.bind_param(v)),
                })
                .collect()
        };
        let cond_holds = |c: &Condition| -> Option<bool> {
            // a condition on the parameter alone can be decided once p is known
            let v = p?;
            let only_p = |l: &Linear| l.k == 0 && l.i == 0 && l.j == 0;
            (only_p(&c.lhs) && only_p(&c.rhs)).then(|| c.holds(Point::new(0, v, 0)))
        };
        out.push_str(&alloc::format!("{} = {}", fam.id, fam.template.as_str()));
        if let Some(v) = p {
            out.push_str(&alloc::format!(" with {param} = {v}"));
        }
        out.push('\n');
        for pc in &fam.pieces {
            if pc.conditions.iter().any(|c| cond_holds(c) == Some(false)) {
                continue;
            }
            let conds: Vec<String> = pc
                .conditions
                .iter()
                .filter(|c| cond_holds(c).is_none())
                .map(|c| c.display(param))
                .collect();
            let mut line = alloc::format!(
                "  {}    if {}",
                display_terms(&bind(&pc.terms), param),
                pc.selector.display(param)
            );
            for c in conds {
                line.push_str(", ");
                line.push_str(&c);
            }
            out.push_str(&line);
            out.push('\n');
        }
        if fam.complete_top {
            out.push_str("  top rank otherwise: 2^params minus the lower ranks\n");
        }
        for t in &fam.tables {
            if p.is_some() && t.p != p {
                continue;
            }
            let counts: Vec<String> = t.counts.iter().map(|c| c.to_string()).collect();
            out.push_str(&alloc::format!(
                "  table k = {}{}: {}\n",
                t.k,
                t.p.map(|v| alloc::format!(", {param} = {v}")).unwrap_or_default(),
                counts.join(", ")
            ));
        }
        Ok(out)
    }
}

fn fields(text: &str) -> Vec<&str> {
    text.split('|').map(str::trim).collect()
}

fn parse_point(text: &str, param: char) -> Result<(i64, Option<i64>), String> {
    let mut k = None;
    let mut p = None;
    for part in text.split(',') {
        let (name, value) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| alloc::format!("bad point {part:?}"))?;
        let value: i64 = value
            .trim()
            .parse()
            .map_err(|_| alloc::format!("bad value in {part:?}"))?;
        match name.trim() {
            "k" => k = Some(value),
            n if n.len() == 1 && n.starts_with(param) => p = Some(value),
            n => return Err(alloc::format!("unknown variable {n:?}")),
        }
    }
    Ok((k.ok_or("table point needs k")?, p))
}

fn parse_family_header(text: &str) -> Result<Family, String> {
    let mut words = text.split_whitespace();
    let id = words.next().ok_or("family needs an id")?.to_owned();
    let mut template_text = None;
    let mut param = None;
    let mut complete_top = false;
    let mut fallback = None;
    for w in words {
        let (key, value) = w.split_once('=').ok_or_else(|| alloc::format!("bad attribute {w:?}"))?;
        match key {
            "shape" => template_text = Some(value),
            "param" => {
                let (name, range) = value.split_once(':').ok_or("param needs NAME:MIN..[MAX]")?;
                let mut chars = name.chars();
                let name = match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_lowercase() && !"kij".contains(c) => c,
                    _ => return Err(alloc::format!("bad parameter name {name:?}")),
                };
                let (lo, hi) = range.split_once("..").ok_or("param range needs '..'")?;
                let min = lo.parse().map_err(|_| "bad param minimum")?;
                let max = if hi.is_empty() {
                    None
                } else {
                    Some(hi.parse().map_err(|_| "bad param maximum")?)
                };
                param = Some(ParamRange { name, min, max });
            }
            "complete" if value == "top" => complete_top = true,
            "fallback" => fallback = Some(value.to_owned()),
            _ => return Err(alloc::format!("unknown attribute {key:?}")),
        }
    }
    let pname = param.as_ref().map_or('l', |p: &ParamRange| p.name);
    let template = ShapeTemplate::parse(template_text.ok_or("family needs shape=")?, pname)
        .map_err(|e| e.to_string())?;
    Ok(Family {
        id,
        about: String::new(),
        template,
        param,
        complete_top,
        fallback,
        pieces: Vec::new(),
        tables: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::Enumerator;

    fn reg() -> Registry {
        Registry::builtin()
    }

    fn counts(d: &RankDistribution) -> Vec<u128> {
        d.counts().iter().map(|c| c.try_into().unwrap()).collect()
    }

    fn oracle(shape: &StackedShape) -> Vec<u128> {
        Enumerator::new(shape)
            .unwrap()
            .histogram()
            .into_iter()
            .map(u128::from)
            .collect()
    }

    #[test]
    fn builtin_data_loads() {
        let r = reg();
        assert_eq!(r.version, 1);
        assert!(r.families().len() >= 15);
        assert!(r.typos().len() >= 3);
        for fam in r.families() {
            assert!(!fam.about.is_empty(), "{} lacks a description", fam.id);
        }
    }

    #[test]
    fn double22_at_k4() {
        let d = reg().eval_family("double22", 4, None).unwrap();
        assert_eq!(counts(&d), [1, 9, 126, 504, 384]);
        assert_eq!(d.source(), Source::ClosedForm);
    }

    #[test]
    fn overlapping_k_equals_i_entries_agree_with_generic_pieces() {
        let r = reg();
        assert_eq!(r.eval_rank("double22", 4, None, 4).unwrap(), BigUint::from(384u32));
        assert_eq!(
            r.eval_rank("double55", 10, None, 10).unwrap(),
            BigUint::from(100663296u64)
        );
    }

    #[test]
    fn double55_boundary_table() {
        let d = reg().eval_family("double55", 4, None).unwrap();
        assert_eq!(counts(&d), [1, 9, 78, 648, 64800]);
        // the k=4 table and the k=i pieces give the same numbers
        let e = reg().evaluate("double55", 4, None, TablePolicy::Ignore).unwrap();
        assert!(e.dist.same_counts(&d));
    }

    #[test]
    fn tables_and_pieces_agree_wherever_both_apply() {
        let r = reg();
        for fam in r.families() {
            if fam.pieces.is_empty() {
                continue;
            }
            for t in &fam.tables {
                let by_pieces = r.evaluate(&fam.id, t.k, t.p, TablePolicy::Ignore);
                if let Ok(e) = by_pieces {
                    assert_eq!(e.dist.counts(), t.counts.as_slice(), "{} at k={}", fam.id, t.k);
                }
            }
        }
    }

    #[test]
    fn triple_s3_top_example() {
        let g = reg().eval_rank("triple-s3", 9, Some(0), 9).unwrap();
        let want = (BigInt::from(1) << 33) - 7 * (BigInt::from(1) << 30)
            + 7 * (BigInt::from(1) << 28)
            - 134217728;
        assert_eq!(BigInt::from(g), want);
    }

    #[test]
    fn triple_2_3_l_matches_its_k6_table() {
        let r = reg();
        let d = r.eval_family("triple-2-3-l", 6, Some(4)).unwrap();
        assert_eq!(
            counts(&d),
            [1, 21, 490, 7200, 108768, 1679616, 2145687552]
        );
        assert_eq!(d.total(), pow2(31));
    }

    #[test]
    fn nfold_values() {
        let r = reg();
        assert_eq!(counts(&r.eval_family("nfold1", 1, Some(3)).unwrap()), [1, 7]);
        for n in 1..=10 {
            let d = r.eval_family("nfold1", 1, Some(n)).unwrap();
            assert_eq!(d.total(), pow2(n as usize));
        }
    }

    #[test]
    fn parameter_and_column_errors() {
        let r = reg();
        assert!(matches!(
            r.eval_family("triple-s3", 5, None),
            Err(RegistryError::ParamRequired { param: 'l', .. })
        ));
        assert!(matches!(
            r.eval_family("double22", 5, Some(1)),
            Err(RegistryError::UnexpectedParam { .. })
        ));
        assert!(matches!(
            r.eval_family("triple-2-3-l", 20, Some(3)),
            Err(RegistryError::ParamOutOfRange { value: 3, .. })
        ));
        assert!(matches!(
            r.eval_family("double-2-5", 5, None),
            Err(RegistryError::FixedColumns { expected: 4, .. })
        ));
        assert!(matches!(
            r.eval_family("nope", 5, None),
            Err(RegistryError::UnknownFamily(_))
        ));
    }

    #[test]
    fn out_of_validity_names_the_rank() {
        let mut data = String::from(BUILTIN_DATA);
        data.push_str("\n@family gap shape=[2]xk\ngap | i=0 | - | 1 | x\n");
        let r = Registry::parse(&data).unwrap();
        assert!(matches!(
            r.eval_family("gap", 3, None),
            Err(RegistryError::OutOfValidity { i: 1, k: 3, .. })
        ));
    }

    #[test]
    fn ambiguity_is_an_error() {
        let data = "@family dup shape=[1]xk\ndup | i=0 | - | 1 | a\ndup | i=0 | k>0 | 1 | b\ndup | i=1 | - | 2^k-1 | c\n";
        let r = Registry::parse(data).unwrap();
        assert!(matches!(
            r.eval_family("dup", 2, None),
            Err(RegistryError::Ambiguous { i: 0, .. })
        ));
    }

    #[test]
    fn data_errors_name_the_line() {
        let bad = "@version 1\n@family f shape=[2]xk\nf | i=0 | - | 2^^3 | x\n";
        assert!(matches!(Registry::parse(bad), Err(RegistryError::Data { line: 3, .. })));
        let bad = "@family f shape=[2]xk fallback=zzz\n";
        assert!(Registry::parse(bad).is_err());
        let bad = "g | i=0 | - | 1 | x\n";
        assert!(matches!(Registry::parse(bad), Err(RegistryError::Data { line: 1, .. })));
    }

    #[test]
    fn fallback_is_followed_above_the_range() {
        let r = reg();
        let a = r.evaluate("triple-s3", 16, Some(7), TablePolicy::Prefer).unwrap();
        assert_eq!(a.family, "triple-s3-general");
        let b = r.evaluate("triple-s3", 16, Some(5), TablePolicy::Prefer).unwrap();
        assert_eq!(b.family, "triple-s3");
    }

    #[test]
    fn general_l_agrees_with_the_l5_table() {
        let r = reg();
        for k in 1..=30 {
            let own = r.eval_family("triple-s3", k, Some(5)).unwrap();
            let gen = r.eval_family("triple-s3-general", k, Some(5)).unwrap();
            assert!(own.same_counts(&gen), "k={k}");
        }
    }

    #[test]
    fn rank_seven_stabilizes_for_large_l() {
        let r = reg();
        for k in 8..=30 {
            let base = r.eval_rank("triple-s3", k, Some(5), 7).unwrap();
            for l in 6..=8 {
                assert_eq!(r.eval_rank("triple-s3", k, Some(l), 7).unwrap(), base, "k={k} l={l}");
            }
        }
    }

    #[test]
    fn symbolic_mass_identity_holds() {
        let r = reg();
        for (id, ps) in [
            ("double22", alloc::vec![None]),
            ("double55", alloc::vec![None]),
            ("single", (1..=10).map(Some).collect()),
            ("triple-2-3-l", (4..=12).map(Some).collect()),
            ("triple-s3", (0..=5).map(Some).collect()),
            ("triple-s3-general", (5..=12).map(Some).collect()),
        ] {
            for p in ps {
                let res = r.symbolic_mass_residual(id, p).unwrap();
                assert!(res.is_empty(), "{id} at {p:?}: residual {res:?}");
            }
        }
    }

    #[test]
    fn printed_values_flagged_as_typos_break_the_mass_identity() {
        let r = reg();
        for t in r.typos() {
            let fam = r.family(&t.family).unwrap();
            let param = fam.param_name();
            let (Ok(printed), Ok(stored)) =
                (parse_terms(&t.printed, param), parse_terms(&t.stored, param))
            else {
                continue;
            };
            // swap the stored term set for the printed one and re-check
            let mut data = String::new();
            for l in BUILTIN_DATA.lines() {
                let f = fields(l);
                if f.len() == 5 && f[0] == t.family && !l.starts_with('@') {
                    let terms = parse_terms(f[3], param).unwrap();
                    if stored.iter().all(|s| terms.contains(s)) {
                        let swapped: Vec<SymTerm> = terms
                            .iter()
                            .map(|x| match stored.iter().position(|s| s == x) {
                                Some(n) => printed[n].clone(),
                                None => x.clone(),
                            })
                            .collect();
                        data.push_str(&alloc::format!(
                            "{} | {} | {} | {} | {}\n",
                            f[0],
                            f[1],
                            f[2],
                            display_terms(&swapped, param),
                            f[4]
                        ));
                        continue;
                    }
                }
                data.push_str(l);
                data.push('\n');
            }
            let altered = Registry::parse(&data).unwrap();
            let fam = altered.family(&t.family).unwrap();
            let ps: Vec<Option<i64>> = match &fam.param {
                None => alloc::vec![None],
                Some(pr) => (pr.min..=pr.max.unwrap_or(pr.min + 4)).map(Some).collect(),
            };
            let broken = ps
                .iter()
                .any(|&p| !altered.symbolic_mass_residual(&t.family, p).unwrap().is_empty());
            assert!(broken, "printed value for {} {} is consistent", t.family, t.location);
        }
    }

    #[test]
    fn closed_forms_match_enumeration_on_small_instances() {
        let r = reg();
        // (family, parameter values, k values) kept under 2^20 states
        let cases: &[(&str, &[Option<i64>], core::ops::RangeInclusive<i64>)] = &[
            ("single", &[Some(1), Some(2), Some(3), Some(5), Some(7)], 1..=7),
            ("double22", &[None], 1..=8),
            ("double55", &[None], 1..=5),
            ("nfold1", &[Some(1), Some(4), Some(9)], 1..=1),
            ("triple-s3", &[Some(0)], 1..=3),
            ("triple-s3", &[Some(1), Some(2)], 1..=2),
        ];
        for (id, ps, ks) in cases {
            for &p in *ps {
                for k in ks.clone() {
                    let e = r.evaluate(id, k, p, TablePolicy::Prefer).unwrap();
                    assert_eq!(counts(&e.dist), oracle(&e.shape), "{id} k={k} p={p:?}");
                }
            }
        }
    }

    #[test]
    fn lookup_by_shape() {
        let r = reg();
        let s = StackedShape::parse("[5;1]x5").unwrap();
        let hits = r.lookup_shape(&s);
        assert!(hits.iter().any(|(f, _, _)| f.id == "single-5-plus1"));
        let s = StackedShape::parse("[3;5;3]x7").unwrap();
        let hits = r.lookup_shape(&s);
        assert!(hits.iter().any(|(f, _, p)| f.id == "triple-s3" && *p == Some(2)));
        let s = StackedShape::parse("[1;1;1]x1").unwrap();
        let e = r.eval_shape(&s).unwrap();
        assert_eq!(counts(&e.dist), [1, 7]);
        let s = StackedShape::parse("[4;6]x3").unwrap();
        assert!(r.eval_shape(&s).is_err());
    }

    #[test]
    fn symbolic_rendering() {
        let r = reg();
        let text = r.render_symbolic("triple-s3", Some(2)).unwrap();
        assert!(text.contains("347*2^(k+3) + 1503872    if i = 5"));
        assert!(!text.contains("5936"));
        let text = r.render_symbolic("double22", None).unwrap();
        assert!(text.contains("3*2^(k+1) + 30    if i = 2, k > 2"));
        assert!(text.contains("table k = 2: 1, 9, 54"));
    }
}
