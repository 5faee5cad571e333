//! Single-threaded enumeration kernel: walk a range of parameter states,
//! realize each one, and histogram the ranks.
//!
//! Every row of a stacked shape is a contiguous window of `cols` parameter
//! bits (see [`StackedShape::row_starts`]), so with the whole state in one
//! `u64` a row costs one shift and one mask. Parallel drivers split the state
//! space with [`chunk_ranges`] and sum the per-chunk histograms.

use alloc::vec::Vec;
use core::ops::Range;

use crate::gf2::{low_mask, MAX_COLS};
use crate::shape::StackedShape;

/// Largest parameter count the single-word kernel accepts.
pub const MAX_ENUM_PARAMS: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumError {
    #[error("{shape} has {params} parameters; the enumeration kernel handles at most 63")]
    TooManyParams { shape: alloc::string::String, params: usize },
}

const LANES: usize = 8;

/// Per-row basis vectors and pivot bits, one per lane. Zero rows carry a
/// zero pivot and so never reduce later rows.
struct LaneScratch {
    basis: Vec<[u64; LANES]>,
    pivots: Vec<[u64; LANES]>,
}

impl LaneScratch {
    fn new(rows: usize) -> Self {
        Self {
            basis: alloc::vec![[0; LANES]; rows],
            pivots: alloc::vec![[0; LANES]; rows],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enumerator {
    starts: Vec<u32>,
    mask: u64,
    cap: usize,
    params: u32,
}

impl Enumerator {
    pub fn new(shape: &StackedShape) -> Result<Self, EnumError> {
        let params = shape.free_param_count();
        if params > MAX_ENUM_PARAMS {
            return Err(EnumError::TooManyParams {
                shape: shape.canonical_string(),
                params,
            });
        }
        debug_assert!(shape.cols() <= MAX_COLS);
        Ok(Self {
            starts: shape.row_starts().into_iter().map(|s| s as u32).collect(),
            mask: low_mask(shape.cols()),
            cap: shape.max_rank(),
            params: params as u32,
        })
    }

    pub fn params(&self) -> u32 {
        self.params
    }

    pub fn state_count(&self) -> u64 {
        1u64 << self.params
    }

    /// Histogram length, `max_rank + 1`.
    pub fn hist_len(&self) -> usize {
        self.cap + 1
    }

    /// Rank of the matrix realized from `state`.
    #[inline]
    pub fn rank_of(&self, state: u64) -> usize {
        let mut basis = [0u64; MAX_COLS];
        let mut pivots = [0u64; MAX_COLS];
        let mut rank = 0;
        for &s in &self.starts {
            let mut x = (state >> s) & self.mask;
            for b in 0..rank {
                let take = ((x & pivots[b]) != 0) as u64;
                x ^= basis[b] & take.wrapping_neg();
            }
            if x != 0 {
                basis[rank] = x;
                pivots[rank] = x & x.wrapping_neg();
                rank += 1;
                if rank == self.cap {
                    break;
                }
            }
        }
        rank
    }

    /// Adds the rank of every state in `range` into `hist`.
    #[inline(always)]
    pub fn tally(&self, range: Range<u64>, hist: &mut [u64]) {
        assert!(hist.len() >= self.hist_len());
        assert!(range.end <= self.state_count());
        let mut scratch = LaneScratch::new(self.starts.len());
        let mut state = range.start;
        while range.end - state >= LANES as u64 {
            for r in self.ranks_of_lanes(state, &mut scratch) {
                hist[r as usize] += 1;
            }
            state += LANES as u64;
        }
        for state in state..range.end {
            hist[self.rank_of(state)] += 1;
        }
    }

    /// Ranks of `first..first + LANES`, eliminated in lockstep. Each lane is
    /// an independent dependency chain, so the CPU can overlap them.
    #[inline(always)]
    fn ranks_of_lanes(&self, first: u64, scratch: &mut LaneScratch) -> [u32; LANES] {
        let mut ranks = [0u32; LANES];
        let states: [u64; LANES] = core::array::from_fn(|l| first + l as u64);
        let cap = self.cap as u32;
        for (r, &s) in self.starts.iter().enumerate() {
            let mut x: [u64; LANES] = core::array::from_fn(|l| (states[l] >> s) & self.mask);
            for b in 0..r {
                let (basis, pivots) = (&scratch.basis[b], &scratch.pivots[b]);
                for l in 0..LANES {
                    let take = ((x[l] & pivots[l]) != 0) as u64;
                    x[l] ^= basis[l] & take.wrapping_neg();
                }
            }
            for l in 0..LANES {
                ranks[l] += (x[l] != 0) as u32;
            }
            scratch.basis[r] = x;
            scratch.pivots[r] = core::array::from_fn(|l| x[l] & x[l].wrapping_neg());
            if ranks.iter().all(|&k| k == cap) {
                break;
            }
        }
        ranks
    }

    /// Whole-space histogram, single-threaded.
    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = alloc::vec![0u64; self.hist_len()];
        self.tally(0..self.state_count(), &mut hist);
        hist
    }
}

/// Splits `[0, 2^params)` by its top `chunk_bits` bits into disjoint,
/// ordered, equal-size ranges.
pub fn chunk_ranges(params: u32, chunk_bits: u32) -> Vec<Range<u64>> {
    let bits = chunk_bits.min(params);
    let size = 1u64 << (params - bits);
    (0..1u64 << bits).map(|c| c * size..(c + 1) * size).collect()
}
