//! Exhaustive enumeration across worker threads.
//!
//! The state space is cut into equal chunks by its top bits. Workers claim
//! chunks from a shared counter and tally into private histograms, which
//! are summed at the end, so the result does not depend on scheduling.

use std::num::NonZeroUsize;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use num_bigint::BigUint;
use persymm_core::dist::DistError;
use persymm_core::enumerate::{chunk_ranges, EnumError, Enumerator};
use persymm_core::solcount::{EquationSystemSpec, SolCountError, TupleCounter};
use persymm_core::{RankDistribution, Source, StackedShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_states: u64,
    pub workers: usize,
    pub chunk_bits: u32,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_states: 1 << 34,
            workers: thread::available_parallelism().map_or(1, NonZeroUsize::get),
            chunk_bits: 10,
        }
    }
}

impl EnumerationBudget {
    pub fn with_max_states(self, max_states: u64) -> Self {
        Self { max_states, ..self }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            ..self
        }
    }

    /// Whether `2^bits` states fit.
    pub fn allows(&self, bits: usize) -> bool {
        bits < 64 && (1u64 << bits) <= self.max_states
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{what} needs 2^{bits} states, over the budget of {max}")]
    BudgetExceeded { what: String, bits: usize, max: u64 },
    #[error(transparent)]
    Enumeration(#[from] EnumError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    SolCount(#[from] SolCountError),
}

/// [`Enumerator::tally`], compiled for AVX2 when the CPU has it. The lane
/// kernel vectorizes well and runs several times faster that way.
pub fn tally(e: &Enumerator, range: Range<u64>, hist: &mut [u64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just detected.
        return unsafe { tally_avx2(e, range, hist) };
    }
    e.tally(range, hist)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tally_avx2(e: &Enumerator, range: Range<u64>, hist: &mut [u64]) {
    e.tally(range, hist)
}

/// Runs `f` over every range, `workers` at a time, and returns the results
/// in range order.
fn run_chunks<T, F>(ranges: &[Range<u64>], workers: usize, f: F) -> Vec<T>
where
    T: Send + Default + Clone,
    F: Fn(Range<u64>) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, ranges.len().max(1));
    let mut slots: Vec<T> = vec![T::default(); ranges.len()];
    let per_worker: Vec<Vec<(usize, T)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let c = next.fetch_add(1, Ordering::Relaxed);
                        let Some(r) = ranges.get(c) else { break };
                        done.push((c, f(r.clone())));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for (c, v) in per_worker.into_iter().flatten() {
        slots[c] = v;
    }
    slots
}

/// Exact rank distribution of `shape` by enumerating every assignment.
pub fn enumerate_rank_distribution(
    shape: &StackedShape,
    budget: &EnumerationBudget,
) -> Result<RankDistribution, OracleError> {
    let bits = shape.free_param_count();
    if !budget.allows(bits) {
        return Err(OracleError::BudgetExceeded {
            what: shape.canonical_string(),
            bits,
            max: budget.max_states,
        });
    }
    enumerate_unbounded(shape, budget.workers, budget.chunk_bits)
}

/// As [`enumerate_rank_distribution`] but ignoring `max_states`.
pub fn enumerate_unbounded(
    shape: &StackedShape,
    workers: usize,
    chunk_bits: u32,
) -> Result<RankDistribution, OracleError> {
    let e = Enumerator::new(shape)?;
    let ranges = chunk_ranges(e.params(), chunk_bits);
    let parts = run_chunks(&ranges, workers, |r| {
        let mut h = vec![0u64; e.hist_len()];
        tally(&e, r, &mut h);
        h
    });
    let mut total = vec![BigUint::default(); e.hist_len()];
    for h in parts {
        for (t, c) in total.iter_mut().zip(h) {
            *t += c;
        }
    }
    Ok(RankDistribution::new(shape, total, Source::Oracle)?)
}

/// Brute-force `R_q` over all coefficient tuples.
pub fn oracle_count_solutions(
    spec: &EquationSystemSpec,
    budget: &EnumerationBudget,
) -> Result<BigUint, OracleError> {
    let t = TupleCounter::new(spec)?;
    if !budget.allows(t.bits()) {
        return Err(OracleError::BudgetExceeded {
            what: format!("{} with q={}", spec.shape(), spec.q()),
            bits: t.bits(),
            max: budget.max_states,
        });
    }
    let ranges = chunk_ranges(t.bits() as u32, budget.chunk_bits);
    let parts = run_chunks(&ranges, budget.workers, |r| t.count_range(r));
    Ok(parts.into_iter().map(BigUint::from).sum())
}

/// Integer states per second for one worker, timed over `sample_states`
/// consecutive states starting at 0 (or the whole space if smaller).
pub fn measure_throughput(shape: &StackedShape, sample_states: u64) -> Result<u64, OracleError> {
    let e = Enumerator::new(shape)?;
    let n = sample_states.clamp(1, e.state_count());
    let mut h = vec![0u64; e.hist_len()];
    let start = Instant::now();
    tally(&e, 0..n, &mut h);
    std::hint::black_box(&h);
    let nanos = start.elapsed().as_nanos().max(1);
    Ok((u128::from(n) * 1_000_000_000 / nanos) as u64)
}
