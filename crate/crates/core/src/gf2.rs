//! Bit-packed vectors and matrices over GF(2).
//!
//! A row is a single `u64`: coordinate `j` lives in bit `j`, so matrices are
//! limited to [`MAX_COLS`] columns. Every rank computation in the crate ends
//! up in [`rank_of_rows`], which is the kernel the enumerator calls once per
//! parameter assignment.

use alloc::vec::Vec;
use core::fmt;

/// Widest row representable in one machine word.
pub const MAX_COLS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Gf2Error {
    #[error("width {0} is outside 1..=64")]
    WidthExceeded(usize),
    #[error("row {bits:#x} has bits at or above width {width}")]
    StrayBits { bits: u64, width: usize },
}

/// Mask with the low `width` bits set.
#[inline]
pub const fn low_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn check_width(width: usize) -> Result<(), Gf2Error> {
    if width == 0 || width > MAX_COLS {
        Err(Gf2Error::WidthExceeded(width))
    } else {
        Ok(())
    }
}

/// A vector in GF(2)^width, `1 <= width <= 64`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gf2Vector {
    width: u8,
    bits: u64,
}

impl Gf2Vector {
    pub fn new(width: usize, bits: u64) -> Result<Self, Gf2Error> {
        check_width(width)?;
        if bits & !low_mask(width) != 0 {
            return Err(Gf2Error::StrayBits { bits, width });
        }
        Ok(Self {
            width: width as u8,
            bits,
        })
    }

    pub fn zero(width: usize) -> Result<Self, Gf2Error> {
        Self::new(width, 0)
    }

    /// The `j`-th standard basis vector.
    pub fn unit(width: usize, j: usize) -> Result<Self, Gf2Error> {
        check_width(width)?;
        assert!(j < width, "coordinate {j} out of range for width {width}");
        Self::new(width, 1 << j)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        j < self.width() && (self.bits >> j) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl core::ops::Add for Gf2Vector {
    type Output = Gf2Vector;

    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "width mismatch");
        Gf2Vector {
            width: self.width,
            bits: self.bits ^ rhs.bits,
        }
    }
}

impl fmt::Debug for Gf2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.width() {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Dense matrix over GF(2) with one word per row.
///
/// An empty row list is allowed and has rank 0.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Matrix {
    cols: usize,
    rows: Vec<u64>,
}

impl Gf2Matrix {
    pub fn new(cols: usize) -> Result<Self, Gf2Error> {
        check_width(cols)?;
        Ok(Self {
            cols,
            rows: Vec::new(),
        })
    }

    pub fn zero(nrows: usize, cols: usize) -> Result<Self, Gf2Error> {
        check_width(cols)?;
        Ok(Self {
            cols,
            rows: alloc::vec![0; nrows],
        })
    }

    pub fn identity(n: usize) -> Result<Self, Gf2Error> {
        check_width(n)?;
        Ok(Self {
            cols: n,
            rows: (0..n).map(|j| 1u64 << j).collect(),
        })
    }

    pub fn from_rows(cols: usize, rows: &[u64]) -> Result<Self, Gf2Error> {
        check_width(cols)?;
        let mask = low_mask(cols);
        if let Some(&bad) = rows.iter().find(|&&r| r & !mask != 0) {
            return Err(Gf2Error::StrayBits {
                bits: bad,
                width: cols,
            });
        }
        Ok(Self {
            cols,
            rows: rows.to_vec(),
        })
    }

    pub fn from_vectors(cols: usize, rows: &[Gf2Vector]) -> Result<Self, Gf2Error> {
        check_width(cols)?;
        let mut out = Self::new(cols)?;
        for r in rows {
            out.push_row(*r)?;
        }
        Ok(out)
    }

    pub fn push_row(&mut self, row: Gf2Vector) -> Result<(), Gf2Error> {
        if row.width() != self.cols {
            return Err(Gf2Error::StrayBits {
                bits: row.bits(),
                width: self.cols,
            });
        }
        self.rows.push(row.bits());
        Ok(())
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> Gf2Vector {
        Gf2Vector {
            width: self.cols as u8,
            bits: self.rows[i],
        }
    }

    /// Raw row words.
    pub fn row_words(&self) -> &[u64] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        (self.rows[i] >> j) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(j < self.cols);
        if value {
            self.rows[i] |= 1 << j;
        } else {
            self.rows[i] &= !(1 << j);
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        self.rows.swap(a, b);
    }

    /// `row[dst] += row[src]`.
    pub fn add_row(&mut self, dst: usize, src: usize) {
        let s = self.rows[src];
        self.rows[dst] ^= s;
    }

    /// Transpose. Panics if the row count exceeds [`MAX_COLS`] (or is zero),
    /// since rows become columns.
    pub fn transpose(&self) -> Gf2Matrix {
        let n = self.rows.len();
        assert!((1..=MAX_COLS).contains(&n), "cannot transpose {n} rows");
        let mut out = alloc::vec![0u64; self.cols];
        for (i, &r) in self.rows.iter().enumerate() {
            let mut bits = r;
            while bits != 0 {
                let j = bits.trailing_zeros() as usize;
                out[j] |= 1 << i;
                bits &= bits - 1;
            }
        }
        Gf2Matrix { cols: n, rows: out }
    }

    /// Dimension of the row space.
    pub fn rank(&self) -> usize {
        let mut scratch = self.rows.clone();
        rank_of_rows(&mut scratch)
    }

    /// Row-echelon form (pivot = lowest set bit, pivots increasing downwards,
    /// zero rows last) together with the rank. Row count is preserved.
    pub fn echelonize(&self) -> (Gf2Matrix, usize) {
        let mut m = self.clone();
        let n = m.rows.len();
        let mut pivot_row = 0;
        for col in 0..self.cols {
            if pivot_row == n {
                break;
            }
            let bit = 1u64 << col;
            let Some(found) = (pivot_row..n).find(|&r| m.rows[r] & bit != 0) else {
                continue;
            };
            m.rows.swap(pivot_row, found);
            let p = m.rows[pivot_row];
            for r in m.rows[pivot_row + 1..].iter_mut() {
                if *r & bit != 0 {
                    *r ^= p;
                }
            }
            pivot_row += 1;
        }
        (m, pivot_row)
    }
}

impl fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Gf2Matrix {}x{} [", self.nrows(), self.cols)?;
        for i in 0..self.nrows() {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        f.write_str("]")
    }
}

/// Rank of the span of `rows`, destroying the slice contents.
///
/// Forward elimination in input order: each incoming row is reduced by the
/// basis collected so far (pivot = lowest set bit) and, if nonzero, joins it.
/// The reduced rows are stored back into the front of the slice.
#[inline]
pub fn rank_of_rows(rows: &mut [u64]) -> usize {
    rank_of_rows_capped(rows, usize::MAX)
}

/// Like [`rank_of_rows`] but stops as soon as `cap` independent rows are
/// found; the result is `min(rank, cap)`.
#[inline]
pub fn rank_of_rows_capped(rows: &mut [u64], cap: usize) -> usize {
    let mut pivots = [0u64; MAX_COLS];
    let mut rank = 0;
    for idx in 0..rows.len() {
        let mut x = rows[idx];
        for b in 0..rank {
            // branch-free: xor the basis row iff x has its pivot bit
            let take = ((x & pivots[b]) != 0) as u64;
            x ^= rows[b] & take.wrapping_neg();
        }
        if x != 0 {
            rows[rank] = x;
            pivots[rank] = x & x.wrapping_neg();
            rank += 1;
            if rank >= cap {
                break;
            }
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook Gauss-Jordan over a dense `bool` grid: pick a pivot in each
    /// column, clear it from every other row.
    fn naive_rank(m: &[Vec<bool>], cols: usize) -> usize {
        let mut a: Vec<Vec<bool>> = m.to_vec();
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..a.len()).find(|&r| a[r][c]) else {
                continue;
            };
            a.swap(rank, p);
            for r in 0..a.len() {
                if r != rank && a[r][c] {
                    for cc in 0..cols {
                        let v = a[rank][cc];
                        a[r][cc] ^= v;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn to_grid(m: &Gf2Matrix) -> Vec<Vec<bool>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m.get(i, j)).collect())
            .collect()
    }

    // xorshift so the unit tests need no external RNG
    struct XorShift(u64);
    impl XorShift {
        fn next(&mut self) -> u64 {
            let mut x = self.0;
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            self.0 = x;
            x
        }
    }

    fn random_matrix(rng: &mut XorShift, max_rows: usize, max_cols: usize) -> Gf2Matrix {
        let rows = (rng.next() as usize) % (max_rows + 1);
        let cols = 1 + (rng.next() as usize) % max_cols;
        let words: Vec<u64> = (0..rows).map(|_| rng.next() & low_mask(cols)).collect();
        Gf2Matrix::from_rows(cols, &words).unwrap()
    }

    #[test]
    fn zero_and_identity() {
        assert_eq!(Gf2Matrix::zero(5, 5).unwrap().rank(), 0);
        assert_eq!(Gf2Matrix::identity(3).unwrap().rank(), 3);
        assert_eq!(Gf2Matrix::new(4).unwrap().rank(), 0);
    }

    #[test]
    fn persymmetric_5x5_example_matches_naive() {
        // alpha = (1,0,0,0,1,0,0,0,1): entry (r,c) = alpha[r+c]
        let alpha = [1u8, 0, 0, 0, 1, 0, 0, 0, 1];
        let rows: Vec<u64> = (0..5)
            .map(|r| (0..5).fold(0u64, |acc, c| acc | ((alpha[r + c] as u64) << c)))
            .collect();
        let m = Gf2Matrix::from_rows(5, &rows).unwrap();
        let expected = naive_rank(&to_grid(&m), 5);
        // rows e0+e4, e3, e2, e1, e0+e4
        assert_eq!(expected, 4);
        assert_eq!(m.rank(), expected);
    }

    #[test]
    fn widths_are_validated() {
        assert_eq!(Gf2Matrix::new(0), Err(Gf2Error::WidthExceeded(0)));
        assert_eq!(Gf2Matrix::new(65), Err(Gf2Error::WidthExceeded(65)));
        assert!(Gf2Vector::new(3, 0b1000).is_err());
        assert!(Gf2Matrix::from_rows(3, &[0b111, 0b1000]).is_err());
        assert!(Gf2Matrix::new(64).is_ok());
    }

    #[test]
    fn echelonize_examples() {
        let z = Gf2Matrix::zero(2, 4).unwrap();
        assert_eq!(z.echelonize(), (z.clone(), 0));
        let single = Gf2Matrix::from_rows(4, &[0b0110]).unwrap();
        assert_eq!(single.echelonize(), (single.clone(), 1));
    }

    fn in_span(basis: &[u64], v: u64) -> bool {
        let mut rows: Vec<u64> = basis.to_vec();
        let r0 = rank_of_rows(&mut rows.clone());
        rows.push(v);
        rank_of_rows(&mut rows) == r0
    }

    #[test]
    fn echelon_form_preserves_row_space() {
        let mut rng = XorShift(0x9e3779b97f4a7c15);
        for _ in 0..500 {
            let m = random_matrix(&mut rng, 8, 8);
            let (e, r) = m.echelonize();
            assert_eq!(r, m.rank());
            assert_eq!(e.nrows(), m.nrows());
            for &w in e.row_words() {
                assert!(in_span(m.row_words(), w));
            }
            for &w in m.row_words() {
                assert!(in_span(e.row_words(), w));
            }
            // echelon shape: strictly increasing pivots on nonzero rows, zeros after
            let words = e.row_words();
            for i in 0..r {
                assert_ne!(words[i], 0);
                if i + 1 < r {
                    assert!(words[i].trailing_zeros() < words[i + 1].trailing_zeros());
                }
            }
            assert!(words[r..].iter().all(|&w| w == 0));
        }
    }

    #[test]
    fn random_6x6_rank_is_self_consistent() {
        let mut rng = XorShift(42);
        for _ in 0..200 {
            let words: Vec<u64> = (0..6).map(|_| rng.next() & 0x3f).collect();
            let m = Gf2Matrix::from_rows(6, &words).unwrap();
            assert_eq!(m.echelonize().1, m.rank());
        }
    }

    #[test]
    fn kernel_matches_naive_oracle() {
        let mut rng = XorShift(7);
        for _ in 0..10_000 {
            let m = random_matrix(&mut rng, 16, 16);
            assert_eq!(m.rank(), naive_rank(&to_grid(&m), m.ncols()), "{m:?}");
        }
    }

    #[test]
    fn rank_equals_transpose_rank() {
        let mut rng = XorShift(99);
        for _ in 0..2_000 {
            let m = random_matrix(&mut rng, 16, 16);
            if m.nrows() == 0 {
                continue;
            }
            assert_eq!(m.rank(), m.transpose().rank());
        }
        // every 3x3 matrix
        for bits in 0u64..(1 << 9) {
            let rows = [bits & 7, (bits >> 3) & 7, (bits >> 6) & 7];
            let m = Gf2Matrix::from_rows(3, &rows).unwrap();
            assert_eq!(m.rank(), m.transpose().rank());
        }
    }

    #[test]
    fn rank_invariant_under_row_operations() {
        let mut rng = XorShift(1234);
        for _ in 0..2_000 {
            let mut m = random_matrix(&mut rng, 12, 12);
            if m.nrows() < 2 {
                continue;
            }
            let r = m.rank();
            let a = (rng.next() as usize) % m.nrows();
            let b = (rng.next() as usize) % m.nrows();
            m.swap_rows(a, b);
            assert_eq!(m.rank(), r);
            if a != b {
                m.add_row(a, b);
                assert_eq!(m.rank(), r);
            }
        }
    }

    #[test]
    fn capped_rank() {
        let mut rows = [1u64, 2, 4, 8];
        assert_eq!(rank_of_rows_capped(&mut rows, 2), 2);
    }
}
