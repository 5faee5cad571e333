//! Solution counts of bilinear systems over GF(2)[T].
//!
//! A shape over `k` columns with total row count `n` corresponds to the
//! system `sum_j Y_j W_j^{(b)} = 0` (`j = 1..q`, one equation per
//! constraint family `b`) with `deg Y_j <= k-1`. A persymmetric block of
//! `r` rows is one family with `deg W <= r-1`; a free block of `r` rows is
//! `r` families of degree 0. The number of solutions is
//! `R_q = 2^E sum_i Γ_i 2^{-iq}` with `E = (k + n) q - free_param_count`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::Range;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::dist::RankDistribution;
use crate::gf2::low_mask;
use crate::shape::{BlockKind, StackedShape};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolCountError {
    #[error("q must be at least 1")]
    ZeroQ,
    #[error("distribution is for {got}, system is for {expected}")]
    ShapeMismatch { expected: String, got: String },
    #[error("{shape}, q={q}: the rank sum is not divisible by 2^{shift}; the distribution is wrong")]
    DivisibilityViolation { shape: String, q: usize, shift: usize },
    #[error("{bits} coefficient bits exceed the tuple kernel's limit of {max}")]
    TooManyBits { bits: usize, max: usize },
    #[error("polynomial of degree bound {bound} cannot hold bits {bits:#x}")]
    PolyOverflow { bits: u64, bound: usize },
}

/// Largest total coefficient-bit count the tuple kernel accepts.
pub const MAX_TUPLE_BITS: usize = 63;

/// A polynomial over GF(2) of degree at most `bound`, coefficient of `T^a`
/// in bit `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyGf2 {
    bits: u64,
    bound: usize,
}

impl PolyGf2 {
    pub fn new(bits: u64, bound: usize) -> Result<Self, SolCountError> {
        if bound >= 64 || bits & !low_mask(bound + 1) != 0 {
            return Err(SolCountError::PolyOverflow { bits, bound });
        }
        Ok(Self { bits, bound })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn degree(&self) -> Option<usize> {
        (self.bits != 0).then(|| 63 - self.bits.leading_zeros() as usize)
    }

    /// Product; the bound of the result is the sum of the bounds.
    pub fn mul(&self, other: &PolyGf2) -> Result<PolyGf2, SolCountError> {
        let bound = self.bound + other.bound;
        PolyGf2::new(clmul(self.bits, other.bits), bound)
    }
}

/// Carry-less product of two words whose degrees sum to at most 63.
#[inline]
pub fn clmul(a: u64, mut b: u64) -> u64 {
    let mut acc = 0u64;
    let mut shift = 0;
    while b != 0 {
        let t = b.trailing_zeros();
        shift += t;
        acc ^= a << shift;
        b >>= t;
        b >>= 1;
        shift += 1;
    }
    acc
}

/// `q` together with the degree bounds a shape induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquationSystemSpec {
    shape: StackedShape,
    q: usize,
}

impl EquationSystemSpec {
    pub fn new(shape: StackedShape, q: usize) -> Result<Self, SolCountError> {
        if q == 0 {
            return Err(SolCountError::ZeroQ);
        }
        Ok(Self { shape, q })
    }

    pub fn shape(&self) -> &StackedShape {
        &self.shape
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `deg Y_j` bound.
    pub fn y_degree_bound(&self) -> usize {
        self.shape.cols() - 1
    }

    /// Degree bound of each constraint family, in block order.
    pub fn family_degree_bounds(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for b in self.shape.blocks() {
            match b.kind {
                BlockKind::Persymmetric => v.push(b.rows - 1),
                BlockKind::Free => v.extend(core::iter::repeat_n(0, b.rows)),
            }
        }
        v
    }

    /// `E = (k + total_rows) q - free_param_count`.
    pub fn exponent(&self) -> i64 {
        ((self.shape.cols() + self.shape.total_rows()) * self.q) as i64
            - self.shape.free_param_count() as i64
    }

    /// Coefficient bits across all unknowns: `q (k + total_rows)`.
    pub fn coefficient_bits(&self) -> usize {
        self.q * (self.shape.cols() + self.shape.total_rows())
    }

    /// Scalar equations after expanding every product.
    pub fn equation_count(&self) -> usize {
        self.family_degree_bounds()
            .iter()
            .map(|d| self.shape.cols() + d)
            .sum()
    }
}

/// `R_q` from a rank distribution, exactly.
pub fn count_solutions(
    spec: &EquationSystemSpec,
    dist: &RankDistribution,
) -> Result<BigUint, SolCountError> {
    let expected = spec.shape.canonical_string();
    if dist.shape_str() != expected
        && dist.shape().map(|s| crate::registry::rank_class(&s))
            != Ok(crate::registry::rank_class(&spec.shape))
    {
        return Err(SolCountError::ShapeMismatch {
            expected,
            got: dist.shape_str().into(),
        });
    }
    let e = spec.exponent();
    let q = spec.q as i64;
    let worst = dist.max_rank() as i64 * q - e;
    let shift = worst.max(0) as usize;
    let mut sum = BigUint::zero();
    for (i, g) in dist.counts().iter().enumerate() {
        let exp = e - i as i64 * q + shift as i64;
        sum += g << exp as usize;
    }
    let mask = (BigUint::from(1u32) << shift) - 1u32;
    if !(&sum & &mask).is_zero() {
        return Err(SolCountError::DivisibilityViolation {
            shape: expected,
            q: spec.q,
            shift,
        });
    }
    Ok(sum >> shift)
}

/// Brute-force tuple counter: every assignment of all coefficient bits is
/// one state, laid out as `Y_1..Y_q` (`k` bits each) then, per family,
/// `W_1..W_q`.
#[derive(Debug, Clone)]
pub struct TupleCounter {
    q: usize,
    y_bits: u32,
    y_mask: u64,
    /// `(offset of W_1, bits per W_j, mask)` per family.
    families: Vec<(u32, u32, u64)>,
    bits: usize,
}

impl TupleCounter {
    pub fn new(spec: &EquationSystemSpec) -> Result<Self, SolCountError> {
        let bits = spec.coefficient_bits();
        if bits > MAX_TUPLE_BITS {
            return Err(SolCountError::TooManyBits {
                bits,
                max: MAX_TUPLE_BITS,
            });
        }
        let k = spec.shape.cols();
        let mut offset = (spec.q * k) as u32;
        let mut families = Vec::new();
        for d in spec.family_degree_bounds() {
            let w = (d + 1) as u32;
            families.push((offset, w, low_mask(w as usize)));
            offset += w * spec.q as u32;
        }
        Ok(Self {
            q: spec.q,
            y_bits: k as u32,
            y_mask: low_mask(k),
            families,
            bits,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn state_count(&self) -> u64 {
        1u64 << self.bits
    }

    #[inline]
    pub fn is_solution(&self, state: u64) -> bool {
        let mut ys = [0u64; 64];
        for (j, y) in ys.iter_mut().enumerate().take(self.q) {
            *y = (state >> (j as u32 * self.y_bits)) & self.y_mask;
        }
        for &(off, w, mask) in &self.families {
            let mut acc = 0u64;
            for (j, &y) in ys.iter().enumerate().take(self.q) {
                let wj = (state >> (off + j as u32 * w)) & mask;
                acc ^= clmul(y, wj);
            }
            if acc != 0 {
                return false;
            }
        }
        true
    }

    pub fn count_range(&self, range: Range<u64>) -> u64 {
        assert!(range.end <= self.state_count());
        range.filter(|&s| self.is_solution(s)).count() as u64
    }
}

/// Single-threaded brute-force `R_q`.
pub fn oracle_count_solutions_serial(spec: &EquationSystemSpec) -> Result<u64, SolCountError> {
    let t = TupleCounter::new(spec)?;
    Ok(t.count_range(0..t.state_count()))
}

/// The scalar quadratic system equivalent to the polynomial system, one
/// equation per line, variables `x1..` numbered in [`TupleCounter`] order.
/// Equations run by degree of `T`, then by family; terms by `j`, then by
/// the `Y_j` coefficient index.
pub fn quadratic_system_expansion(spec: &EquationSystemSpec) -> Vec<String> {
    let k = spec.shape.cols();
    let q = spec.q;
    let bounds = spec.family_degree_bounds();
    let mut offsets = Vec::new();
    let mut off = q * k;
    for d in &bounds {
        offsets.push(off);
        off += (d + 1) * q;
    }
    let max_deg = k - 1 + bounds.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    for t in 0..=max_deg {
        for (b, &d) in bounds.iter().enumerate() {
            if t > k - 1 + d {
                continue;
            }
            let mut line = String::new();
            for j in 0..q {
                for a in 0..k {
                    if a > t || t - a > d {
                        continue;
                    }
                    let y = j * k + a + 1;
                    let w = offsets[b] + j * (d + 1) + (t - a) + 1;
                    if !line.is_empty() {
                        line.push_str(" + ");
                    }
                    let _ = write!(line, "x{y}*x{w}");
                }
            }
            line.push_str(" = 0");
            out.push(line);
        }
    }
    out
}
