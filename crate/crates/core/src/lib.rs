//! Exact rank distributions of stacked persymmetric matrices over GF(2).
//!
//! The crate is `no_std` (it needs `alloc`). IO, threads, caching and the
//! command line live in the `persymm` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dist;
pub mod enumerate;
pub mod extension;
pub mod gf2;
pub mod reduction;
pub mod registry;
pub mod shape;
pub mod solcount;
pub mod symbolic;

pub use dist::{RankDistribution, Source};
pub use gf2::{Gf2Matrix, Gf2Vector};
pub use shape::{BlockKind, BlockSpec, ParamAssignment, StackedShape};
pub use reduction::{ReductionRule, ReductionStep, TripleInstance};
pub use registry::Registry;
pub use solcount::EquationSystemSpec;
