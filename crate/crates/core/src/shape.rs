//! Stacked block shapes: a column count `k` and an ordered list of
//! persymmetric (Hankel) and free blocks sharing those columns.
//!
//! Text syntax: `"[" block (";" block)* "]" "x" k`, where a block is an
//! integer or a sum `a+b+...` (persymmetric, rows = sum), or `"(" r ")"` for
//! `r` unconstrained rows. Whitespace is ignored; `×` and `X` are accepted
//! for `x`.
//!
//! Parameter order is fixed: blocks in order; a persymmetric block with `r`
//! rows owns `r + k - 1` anti-diagonal parameters, entry `(row, col)` being
//! parameter `row + col`; a free block owns `r * k` parameters, row-major.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::gf2::{low_mask, Gf2Matrix, MAX_COLS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("malformed shape {text:?}: {reason}")]
    Malformed { text: String, reason: &'static str },
    #[error("block {index} has zero rows")]
    ZeroRows { index: usize },
    #[error("column count must be at least 1")]
    ZeroCols,
    #[error("column count {0} exceeds the 64-column limit")]
    TooManyCols(usize),
    #[error("shape has no blocks")]
    NoBlocks,
    #[error("parameter string has {got} bits, shape needs {expected}")]
    ParamLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Persymmetric,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub rows: usize,
}

impl BlockSpec {
    pub fn persymmetric(rows: usize) -> Self {
        Self {
            kind: BlockKind::Persymmetric,
            rows,
        }
    }

    pub fn free(rows: usize) -> Self {
        Self {
            kind: BlockKind::Free,
            rows,
        }
    }

    /// Parameters this block owns when stacked over `cols` columns.
    pub fn param_count(&self, cols: usize) -> usize {
        match self.kind {
            BlockKind::Persymmetric => self.rows + cols - 1,
            BlockKind::Free => self.rows * cols,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StackedShape {
    cols: usize,
    blocks: Vec<BlockSpec>,
}

impl StackedShape {
    pub fn new(cols: usize, blocks: Vec<BlockSpec>) -> Result<Self, ShapeError> {
        if cols == 0 {
            return Err(ShapeError::ZeroCols);
        }
        if cols > MAX_COLS {
            return Err(ShapeError::TooManyCols(cols));
        }
        if blocks.is_empty() {
            return Err(ShapeError::NoBlocks);
        }
        if let Some(index) = blocks.iter().position(|b| b.rows == 0) {
            return Err(ShapeError::ZeroRows { index });
        }
        Ok(Self { cols, blocks })
    }

    /// `[s; s+m; s+m+l] x k`.
    pub fn triple(s: usize, m: usize, l: usize, k: usize) -> Result<Self, ShapeError> {
        Self::new(
            k,
            alloc::vec![
                BlockSpec::persymmetric(s),
                BlockSpec::persymmetric(s + m),
                BlockSpec::persymmetric(s + m + l),
            ],
        )
    }

    pub fn parse(text: &str) -> Result<Self, ShapeError> {
        parse_shape(text)
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn free_param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count(self.cols)).sum()
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows).sum()
    }

    pub fn max_rank(&self) -> usize {
        self.cols.min(self.total_rows())
    }

    pub fn canonical_string(&self) -> String {
        self.to_string()
    }

    /// Same shape with `t` free rows appended; merges into a trailing free
    /// block if there is one. `t == 0` returns a copy.
    pub fn with_free_rows(&self, t: usize) -> StackedShape {
        let mut blocks = self.blocks.clone();
        if t > 0 {
            match blocks.last_mut() {
                Some(last) if last.kind == BlockKind::Free => last.rows += t,
                _ => blocks.push(BlockSpec::free(t)),
            }
        }
        StackedShape {
            cols: self.cols,
            blocks,
        }
    }

    /// Splits off a trailing free block: `(rest, t)`. `None` if the last
    /// block is persymmetric or is the only block.
    pub fn split_trailing_free(&self) -> Option<(StackedShape, usize)> {
        match self.blocks.split_last() {
            Some((last, rest)) if last.kind == BlockKind::Free && !rest.is_empty() => Some((
                StackedShape {
                    cols: self.cols,
                    blocks: rest.to_vec(),
                },
                last.rows,
            )),
            _ => None,
        }
    }

    /// Same shape with a different column count.
    pub fn with_cols(&self, cols: usize) -> Result<StackedShape, ShapeError> {
        StackedShape::new(cols, self.blocks.clone())
    }

    /// Bit offset of the first parameter of each block.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = off;
                off += b.param_count(self.cols);
                o
            })
            .collect()
    }

    /// For every matrix row, the index of the parameter in column 0. Row `r`
    /// then reads the `cols` consecutive parameters starting there.
    pub fn row_starts(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_rows());
        for (b, off) in self.blocks.iter().zip(self.block_offsets()) {
            for r in 0..b.rows {
                out.push(match b.kind {
                    BlockKind::Persymmetric => off + r,
                    BlockKind::Free => off + r * self.cols,
                });
            }
        }
        out
    }

    pub fn realize(&self, p: &ParamAssignment<'_>) -> Gf2Matrix {
        debug_assert!(core::ptr::eq(p.shape, self) || p.shape == self);
        let rows: Vec<u64> = self
            .row_starts()
            .into_iter()
            .map(|start| p.window(start, self.cols))
            .collect();
        Gf2Matrix::from_rows(self.cols, &rows).expect("window is masked to cols")
    }
}

impl fmt::Display for StackedShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            match b.kind {
                BlockKind::Persymmetric => write!(f, "{}", b.rows)?,
                BlockKind::Free => write!(f, "({})", b.rows)?,
            }
        }
        write!(f, "]x{}", self.cols)
    }
}

impl fmt::Debug for StackedShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StackedShape({self})")
    }
}

impl FromStr for StackedShape {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_shape(s)
    }
}

pub fn parse_shape(text: &str) -> Result<StackedShape, ShapeError> {
    let malformed = |reason| ShapeError::Malformed {
        text: text.to_string(),
        reason,
    };
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let body = compact
        .strip_prefix('[')
        .ok_or_else(|| malformed("expected '['"))?;
    let close = body.find(']').ok_or_else(|| malformed("expected ']'"))?;
    let (inner, tail) = (&body[..close], &body[close + 1..]);
    let cols_text = tail
        .strip_prefix('x')
        .or_else(|| tail.strip_prefix('X'))
        .or_else(|| tail.strip_prefix('×'))
        .ok_or_else(|| malformed("expected 'x' after ']'"))?;
    let cols: usize = parse_uint(cols_text).ok_or_else(|| malformed("bad column count"))?;

    if inner.is_empty() {
        return Err(ShapeError::NoBlocks);
    }
    let mut blocks = Vec::new();
    for part in inner.split(';') {
        if part.is_empty() {
            return Err(malformed("empty block"));
        }
        let block = if let Some(free) = part.strip_prefix('(') {
            let r = free
                .strip_suffix(')')
                .ok_or_else(|| malformed("unclosed '('"))?;
            BlockSpec::free(parse_sum(r).ok_or_else(|| malformed("bad free row count"))?)
        } else {
            BlockSpec::persymmetric(parse_sum(part).ok_or_else(|| malformed("bad block"))?)
        };
        blocks.push(block);
    }
    StackedShape::new(cols, blocks)
}

fn parse_uint(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_sum(s: &str) -> Option<usize> {
    s.split('+')
        .try_fold(0usize, |acc, t| acc.checked_add(parse_uint(t)?))
}

/// A concrete assignment of every free parameter of a shape, as a bit string
/// in the documented parameter order.
#[derive(Clone, PartialEq, Eq)]
pub struct ParamAssignment<'a> {
    shape: &'a StackedShape,
    words: Vec<u64>,
}

impl<'a> ParamAssignment<'a> {
    pub fn zero(shape: &'a StackedShape) -> Self {
        let n = shape.free_param_count();
        Self {
            shape,
            words: alloc::vec![0; n.div_ceil(64)],
        }
    }

    /// Low `free_param_count` bits of `state` (shapes with at most 64
    /// parameters); higher bits must be zero.
    pub fn from_u64(shape: &'a StackedShape, state: u64) -> Result<Self, ShapeError> {
        let n = shape.free_param_count();
        if n < 64 && state >> n != 0 {
            return Err(ShapeError::ParamLength {
                expected: n,
                got: 64 - state.leading_zeros() as usize,
            });
        }
        let mut p = Self::zero(shape);
        if let Some(w) = p.words.first_mut() {
            *w = state;
        } else if state != 0 {
            return Err(ShapeError::ParamLength {
                expected: n,
                got: 64,
            });
        }
        Ok(p)
    }

    pub fn from_bits(shape: &'a StackedShape, bits: &[bool]) -> Result<Self, ShapeError> {
        let n = shape.free_param_count();
        if bits.len() != n {
            return Err(ShapeError::ParamLength {
                expected: n,
                got: bits.len(),
            });
        }
        let mut p = Self::zero(shape);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                p.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(p)
    }

    pub fn shape(&self) -> &StackedShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.free_param_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// `len` consecutive bits starting at `start`, as the low bits of a word.
    fn window(&self, start: usize, len: usize) -> u64 {
        let (w, b) = (start / 64, start % 64);
        let mut v = self.words[w] >> b;
        if b != 0 && w + 1 < self.words.len() {
            v |= self.words[w + 1] << (64 - b);
        }
        v & low_mask(len)
    }

    pub fn realize(&self) -> Gf2Matrix {
        self.shape.realize(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> StackedShape {
        parse_shape(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        let s = p("[5]x5");
        assert_eq!(s.cols(), 5);
        assert_eq!(s.blocks(), &[BlockSpec::persymmetric(5)]);

        let s = p("[2;2+3;(1)]x4");
        assert_eq!(s.cols(), 4);
        assert_eq!(
            s.blocks(),
            &[
                BlockSpec::persymmetric(2),
                BlockSpec::persymmetric(5),
                BlockSpec::free(1)
            ]
        );
        assert_eq!(s.total_rows(), 8);
        assert_eq!(p("[2;2+3+4]x6").blocks()[1].rows, 9);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_shape("[0]x3"), Err(ShapeError::ZeroRows { index: 0 }));
        assert_eq!(parse_shape("[2]x0"), Err(ShapeError::ZeroCols));
        assert_eq!(parse_shape("[2]x65"), Err(ShapeError::TooManyCols(65)));
        assert_eq!(parse_shape("[]x3"), Err(ShapeError::NoBlocks));
        assert!(parse_shape("[(0)]x3").is_err());
        for bad in ["", "2x3", "[2x3", "[2]", "[2]y3", "[2;;3]x3", "[(2]x3", "[a]x2", "[2+]x2", "[2]x-1"] {
            assert!(
                matches!(parse_shape(bad), Err(ShapeError::Malformed { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn canonical_strings() {
        assert_eq!(p("[ 2 ; (2) ]x4").canonical_string(), "[2;(2)]x4");
        assert_eq!(p("[2+3]x4").canonical_string(), "[5]x4");
        assert_eq!(p("[2;2]×4").canonical_string(), "[2;2]x4");
        assert_eq!(p("[3;3;3+2]X7").canonical_string(), "[3;3;5]x7");
    }

    #[test]
    fn free_param_counts() {
        assert_eq!(p("[5]x5").free_param_count(), 9);
        assert_eq!(p("[2;2]x4").free_param_count(), 10);
        assert_eq!(p("[2;2;2;(3)]x4").free_param_count(), 3 * (2 + 4 - 1) + 3 * 4);
        assert_eq!(p("[2;2;2;(3)]x4").free_param_count(), 27);
        assert_eq!(StackedShape::triple(3, 0, 2, 7).unwrap(), p("[3;3;5]x7"));
    }

    #[test]
    fn realize_small_examples() {
        let s = p("[2]x2");
        let zero = ParamAssignment::zero(&s).realize();
        assert_eq!(zero.rank(), 0);
        assert!(zero.row_words().iter().all(|&w| w == 0));

        let a = ParamAssignment::from_bits(&s, &[true, false, true]).unwrap();
        let m = a.realize();
        assert_eq!(m.row_words(), &[0b01, 0b10]);
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn realize_layout_alpha_then_beta() {
        // rows: a1 a2 a3 a4 / a2 a3 a4 a5 / b11..b14 / b21..b24
        let s = p("[2;(2)]x4");
        assert_eq!(s.free_param_count(), 13);
        for idx in 0..13 {
            let m = ParamAssignment::from_u64(&s, 1 << idx).unwrap().realize();
            let mut expected = [0u64; 4];
            match idx {
                0..=4 => {
                    let a = idx as i32; // alpha_{a+1}
                    for r in 0..2 {
                        let c = a - r;
                        if (0..4).contains(&c) {
                            expected[r as usize] |= 1 << c;
                        }
                    }
                }
                _ => {
                    let f = idx - 5;
                    expected[2 + f / 4] |= 1 << (f % 4);
                }
            }
            assert_eq!(m.row_words(), &expected, "parameter {idx}");
        }
    }

    #[test]
    fn persymmetric_blocks_have_constant_antidiagonals() {
        for text in ["[3]x4", "[2;3]x3", "[4;(1);2]x5"] {
            let s = p(text);
            let n = s.free_param_count();
            let mut row0 = 0;
            let starts: Vec<(usize, usize, BlockKind)> = {
                let mut v = Vec::new();
                for b in s.blocks() {
                    v.push((row0, b.rows, b.kind));
                    row0 += b.rows;
                }
                v
            };
            for state in 0u64..(1 << n) {
                let m = ParamAssignment::from_u64(&s, state).unwrap().realize();
                for &(first, rows, kind) in &starts {
                    if kind != BlockKind::Persymmetric {
                        continue;
                    }
                    for i in first..first + rows - 1 {
                        for j in 1..s.cols() {
                            assert_eq!(m.get(i, j), m.get(i + 1, j - 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn realize_is_injective() {
        for text in ["[3]x4", "[2;2]x3", "[2;(1)]x4", "[1;1;1]x3", "[(2)]x3"] {
            let s = p(text);
            let n = s.free_param_count();
            assert!(n <= 16);
            let mut seen = alloc::collections::BTreeSet::new();
            for state in 0u64..(1 << n) {
                let m = ParamAssignment::from_u64(&s, state).unwrap().realize();
                assert!(seen.insert(m.row_words().to_vec()), "{text} state {state}");
            }
        }
    }

    #[test]
    fn multiword_assignment_windows() {
        // 3 persymmetric blocks of 20 rows over 30 columns: 3*49 = 147 params
        let s = p("[20;20;20]x30");
        let mut bits = alloc::vec![false; s.free_param_count()];
        // global parameter 109 is anti-diagonal 11 of the third block (offset 98)
        bits[109] = true;
        let m = ParamAssignment::from_bits(&s, &bits).unwrap().realize();
        let idx_in_block3 = 109 - 98;
        for r in 0..20 {
            for c in 0..30 {
                assert_eq!(m.get(40 + r, c), r + c == idx_in_block3);
            }
        }
    }

    #[test]
    fn free_block_edits() {
        let s = p("[2;(2)]x4");
        assert_eq!(s.with_free_rows(3).canonical_string(), "[2;(5)]x4");
        assert_eq!(p("[2]x4").with_free_rows(1).canonical_string(), "[2;(1)]x4");
        assert_eq!(p("[2]x4").with_free_rows(0), p("[2]x4"));
        let (rest, t) = s.split_trailing_free().unwrap();
        assert_eq!((rest.canonical_string().as_str(), t), ("[2]x4", 2));
        assert!(p("[(2)]x4").split_trailing_free().is_none());
    }
}
