//! Free-row extension: the rank distribution after stacking `t`
//! unconstrained rows under an existing shape.
//!
//! A matrix of rank `r` over `k` columns, extended by `t` arbitrary rows,
//! reaches rank `r + d` in exactly
//! `[t, d]_2 * 2^{r(t-d)} * prod_{a<d} (2^k - 2^{r+a})`
//! ways, so
//!
//! ```text
//! G'_i = sum_{d=0}^{min(t,i)} [t,d]_2 2^{(i-d)(t-d)} prod_{a=0}^{d-1} (2^k - 2^{i-d+a}) G_{i-d}
//! ```

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::dist::{pow2, DistError, RankDistribution, Source};
use crate::shape::{BlockSpec, ShapeError, StackedShape};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtensionError {
    #[error("distribution is over {found} columns, extension asked for {expected}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Gaussian binomial `[n, d]` at `q = 2`; zero for `d < 0` or `d > n`.
pub fn gaussian_binomial(n: u32, d: i64) -> BigUint {
    if d < 0 || d > n as i64 {
        return BigUint::zero();
    }
    let d = d as usize;
    let n = n as usize;
    // Pascal rule [n,d] = [n-1,d-1] + 2^d [n-1,d], one row at a time
    let mut row: Vec<BigUint> = alloc::vec![BigUint::one()];
    for m in 1..=n {
        let mut next = alloc::vec![BigUint::zero(); m + 1];
        for (j, slot) in next.iter_mut().enumerate().take(d.min(m) + 1) {
            let mut v = BigUint::zero();
            if j >= 1 {
                v += &row[j - 1];
            }
            if j < m {
                v += &row[j] << j;
            }
            *slot = v;
        }
        row = next;
    }
    row.swap_remove(d)
}

/// `prod_{a=0}^{len-1} (2^k - 2^{start+a})`; empty product is 1, and any
/// factor with `start + a >= k` makes it 0.
fn falling_pow2_product(k: usize, start: usize, len: usize) -> BigUint {
    let mut acc = BigUint::one();
    for a in 0..len {
        let e = start + a;
        if e >= k {
            return BigUint::zero();
        }
        acc *= pow2(k) - pow2(e);
    }
    acc
}

/// Number of `t x k` matrices over GF(2) of each rank `0..=min(t,k)`.
pub fn free_block_counts(t: usize, k: usize) -> Vec<BigUint> {
    (0..=t.min(k))
        .map(|i| gaussian_binomial(t as u32, i as i64) * falling_pow2_product(k, 0, i))
        .collect()
}

/// Distribution of the all-free shape `[(t)]xk`.
pub fn free_block_distribution(t: usize, k: usize) -> Result<RankDistribution, ExtensionError> {
    let shape = StackedShape::new(k, alloc::vec![BlockSpec::free(t)])?;
    Ok(RankDistribution::new(
        &shape,
        free_block_counts(t, k),
        Source::Extension,
    )?)
}

/// Applies the extension to raw counts (`counts[i]` for ranks `0..`) over `k`
/// columns. The result has length `min(k, old_max_rank + t) + 1`.
pub fn extend_counts(counts: &[BigUint], t: usize, k: usize) -> Vec<BigUint> {
    let old_max = counts.len().saturating_sub(1);
    let new_max = k.min(old_max + t);
    let coeffs: Vec<BigUint> = (0..=t).map(|d| gaussian_binomial(t as u32, d as i64)).collect();
    (0..=new_max)
        .map(|i| {
            let mut acc = BigUint::zero();
            for d in 0..=t.min(i) {
                let base = i - d;
                let Some(g) = counts.get(base) else { continue };
                if g.is_zero() {
                    continue;
                }
                let prod = falling_pow2_product(k, base, d);
                if prod.is_zero() {
                    continue;
                }
                acc += (&coeffs[d] * prod * g) << (base * (t - d));
            }
            acc
        })
        .collect()
}

/// Distribution of `d`'s shape with `t` free rows appended.
pub fn extend_free_rows(
    d: &RankDistribution,
    t: usize,
    k: usize,
) -> Result<RankDistribution, ExtensionError> {
    let shape = d.shape()?;
    if shape.cols() != k {
        return Err(ExtensionError::ColumnMismatch {
            expected: k,
            found: shape.cols(),
        });
    }
    if t == 0 {
        return Ok(d.clone());
    }
    let extended = shape.with_free_rows(t);
    Ok(RankDistribution::new(
        &extended,
        extend_counts(d.counts(), t, k),
        Source::Extension,
    )?)
}
