use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::shape::{ShapeError, StackedShape};

/// Where a distribution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Oracle,
    ClosedForm,
    Extension,
    Reduction,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Oracle => "oracle",
            Source::ClosedForm => "closed-form",
            Source::Extension => "extension",
            Source::Reduction => "reduction",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DistError {
    #[error("{shape}: expected {expected} rank counts, got {got}")]
    Length {
        shape: String,
        expected: usize,
        got: usize,
    },
    #[error("{shape}: rank-0 count is {got}, must be 1")]
    RankZero { shape: String, got: BigUint },
    #[error("{shape}: counts sum to {got}, expected 2^{log2}")]
    Mass {
        shape: String,
        log2: usize,
        got: BigUint,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Exact counts `counts[i]` of parameter assignments whose realized matrix
/// has rank `i`, for `i = 0..=max_rank`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDistribution {
    shape: String,
    counts: Vec<BigUint>,
    source: Source,
}

/// `2^e`.
pub fn pow2(e: usize) -> BigUint {
    BigUint::one() << e
}

impl RankDistribution {
    /// Validates length, `counts[0] == 1` and the total mass `2^params`.
    pub fn new(
        shape: &StackedShape,
        counts: Vec<BigUint>,
        source: Source,
    ) -> Result<Self, DistError> {
        let d = Self {
            shape: shape.canonical_string(),
            counts,
            source,
        };
        d.validate(shape)?;
        Ok(d)
    }

    /// Skips validation; `shape` is taken verbatim as the label.
    pub fn new_unchecked(shape: String, counts: Vec<BigUint>, source: Source) -> Self {
        Self {
            shape,
            counts,
            source,
        }
    }

    pub fn from_u64(
        shape: &StackedShape,
        counts: &[u64],
        source: Source,
    ) -> Result<Self, DistError> {
        Self::new(shape, counts.iter().map(|&c| BigUint::from(c)).collect(), source)
    }

    pub fn validate(&self, shape: &StackedShape) -> Result<(), DistError> {
        let expected = shape.max_rank() + 1;
        if self.counts.len() != expected {
            return Err(DistError::Length {
                shape: self.shape.clone(),
                expected,
                got: self.counts.len(),
            });
        }
        if !self.counts[0].is_one() {
            return Err(DistError::RankZero {
                shape: self.shape.clone(),
                got: self.counts[0].clone(),
            });
        }
        let total = self.total();
        let log2 = shape.free_param_count();
        if total != pow2(log2) {
            return Err(DistError::Mass {
                shape: self.shape.clone(),
                log2,
                got: total,
            });
        }
        Ok(())
    }

    pub fn shape_str(&self) -> &str {
        &self.shape
    }

    pub fn shape(&self) -> Result<StackedShape, ShapeError> {
        StackedShape::parse(&self.shape)
    }

    pub fn counts(&self) -> &[BigUint] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<BigUint> {
        self.counts
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn max_rank(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    /// `counts[i]`, zero beyond the end.
    pub fn get(&self, i: usize) -> BigUint {
        self.counts.get(i).cloned().unwrap_or_else(BigUint::zero)
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }

    /// Same counts, ignoring labels and provenance.
    pub fn same_counts(&self, other: &RankDistribution) -> bool {
        self.counts == other.counts
    }
}

impl fmt::Display for RankDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (", self.shape)?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ") [{}]", self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let s = StackedShape::parse("[2]x2").unwrap();
        assert!(RankDistribution::from_u64(&s, &[1, 3, 4], Source::Oracle).is_ok());
        assert!(matches!(
            RankDistribution::from_u64(&s, &[1, 3, 5], Source::Oracle),
            Err(DistError::Mass { log2: 3, .. })
        ));
        assert!(matches!(
            RankDistribution::from_u64(&s, &[2, 2, 4], Source::Oracle),
            Err(DistError::RankZero { .. })
        ));
        assert!(matches!(
            RankDistribution::from_u64(&s, &[1, 7], Source::Oracle),
            Err(DistError::Length { .. })
        ));
    }

    #[test]
    fn accessors() {
        let s = StackedShape::parse("[2]x2").unwrap();
        let d = RankDistribution::from_u64(&s, &[1, 3, 4], Source::Oracle).unwrap();
        assert_eq!(d.get(5), BigUint::zero());
        assert_eq!(d.total(), BigUint::from(8u32));
        assert_eq!(alloc::format!("{d}"), "[2]x2 (1, 3, 4) [oracle]");
    }
}
