//! Rank-shift identities for triple shapes `[s; s+m; s+m+l] x k`:
//! a high-rank count equals a power of 16 times a lower-rank count of a
//! smaller triple.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::dist::pow2;
use crate::extension::free_block_counts;
use crate::registry::Registry;
use crate::shape::{ShapeError, StackedShape};

/// The triple `[s; s+m; s+m+l] x k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleInstance {
    pub s: usize,
    pub m: usize,
    pub l: usize,
    pub k: usize,
}

impl TripleInstance {
    pub fn new(s: usize, m: usize, l: usize, k: usize) -> Self {
        Self { s, m, l, k }
    }

    pub fn shape(&self) -> Result<StackedShape, ShapeError> {
        StackedShape::triple(self.s, self.m, self.l, self.k)
    }

    pub fn total_rows(&self) -> usize {
        3 * self.s + 2 * self.m + self.l
    }
}

impl fmt::Display for TripleInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{};{}", self.s, self.s)?;
        if self.m > 0 {
            write!(f, "+{}", self.m)?;
        }
        write!(f, ";{}", self.s)?;
        if self.m > 0 {
            write!(f, "+{}", self.m)?;
        }
        if self.l > 0 {
            write!(f, "+{}", self.l)?;
        }
        write!(f, "]x{}", self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReductionRule {
    /// `Γ_{2s+1+m+j} = 16^j Γ_{2s+1+m}` of `[s; s+m; s+m+l-j] x (k-j)`, `j <= l`.
    LastBlock,
    /// `Γ_{2s+1+m+l+j} = 16^{2j+l} Γ_{2s+1+m-j}` of `[s; s+m-j; s+m-j] x (k-2j-l)`, `j <= m`.
    MiddleBlock,
    /// `Γ_{2s+1+2m+l+j} = 16^{2m+l+3j} Γ_{2(s-j)+1}` of `[s-j; s-j; s-j] x (k-2m-l-3j)`, `j <= s-1`.
    AllBlocks,
    /// `s = 3, m = 0`: `Γ_{7+j} = 2^{4j} Γ_7` of `[3; 3; 3+l-j] x (k-j)`, `j <= l`.
    S3LastBlock,
    /// `s = 3, m = 0`: `Γ_{7+l+j} = 2^{4l+12j} Γ_{2(3-j)+1}` of `[3-j; 3-j; 3-j] x (k-l-3j)`, `j <= 2`.
    S3AllBlocks,
}

impl ReductionRule {
    pub const ALL: [ReductionRule; 5] = [
        ReductionRule::LastBlock,
        ReductionRule::MiddleBlock,
        ReductionRule::AllBlocks,
        ReductionRule::S3LastBlock,
        ReductionRule::S3AllBlocks,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReductionRule::LastBlock => "last-block",
            ReductionRule::MiddleBlock => "middle-block",
            ReductionRule::AllBlocks => "all-blocks",
            ReductionRule::S3LastBlock => "s3-last-block",
            ReductionRule::S3AllBlocks => "s3-all-blocks",
        }
    }
}

impl fmt::Display for ReductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReductionError {
    #[error("rule {rule} does not cover rank {i} of {instance}")]
    NoRuleApplies {
        rule: ReductionRule,
        instance: TripleInstance,
        i: usize,
    },
}

/// `Γ_{source_i}(source) = 2^{multiplier_log2} Γ_{target_i}(target)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionStep {
    pub rule: ReductionRule,
    pub j: usize,
    pub source: TripleInstance,
    pub source_i: usize,
    pub target: TripleInstance,
    pub target_i: usize,
    pub multiplier_log2: usize,
}

impl ReductionStep {
    pub fn multiplier(&self) -> BigUint {
        pow2(self.multiplier_log2)
    }

    /// Same instance and rank on both sides.
    pub fn is_identity(&self) -> bool {
        self.source == self.target && self.source_i == self.target_i
    }
}

impl fmt::Display for ReductionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "G_{}({}) = 2^{} * G_{}({})   [{} j={}]",
            self.source_i,
            self.source,
            self.multiplier_log2,
            self.target_i,
            self.target,
            self.rule,
            self.j
        )
    }
}

/// Applies `rule` to rank `i` of `src`, requiring `k >= i`.
pub fn apply_reduction(
    rule: ReductionRule,
    src: TripleInstance,
    i: usize,
) -> Result<ReductionStep, ReductionError> {
    let none = || ReductionError::NoRuleApplies {
        rule,
        instance: src,
        i,
    };
    let TripleInstance { s, m, l, k } = src;
    if s == 0 || k < i {
        return Err(none());
    }
    let s3 = matches!(rule, ReductionRule::S3LastBlock | ReductionRule::S3AllBlocks);
    if s3 && (s != 3 || m != 0) {
        return Err(none());
    }
    let (base, j_max) = match rule {
        ReductionRule::LastBlock | ReductionRule::S3LastBlock => (2 * s + 1 + m, l),
        ReductionRule::MiddleBlock => (2 * s + 1 + m + l, m),
        ReductionRule::AllBlocks | ReductionRule::S3AllBlocks => (2 * s + 1 + 2 * m + l, s - 1),
    };
    let j = i.checked_sub(base).filter(|&j| j <= j_max).ok_or_else(none)?;
    let (target, target_i, log2) = match rule {
        ReductionRule::LastBlock | ReductionRule::S3LastBlock => {
            (TripleInstance::new(s, m, l - j, k - j), base, 4 * j)
        }
        ReductionRule::MiddleBlock => {
            let shrink = 2 * j + l;
            (
                TripleInstance::new(s, m - j, 0, k.checked_sub(shrink).ok_or_else(none)?),
                2 * s + 1 + m - j,
                4 * shrink,
            )
        }
        ReductionRule::AllBlocks | ReductionRule::S3AllBlocks => {
            let shrink = 2 * m + l + 3 * j;
            (
                TripleInstance::new(s - j, 0, 0, k.checked_sub(shrink).ok_or_else(none)?),
                2 * (s - j) + 1,
                4 * shrink,
            )
        }
    };
    if target.k == 0 {
        return Err(none());
    }
    Ok(ReductionStep {
        rule,
        j,
        source: src,
        source_i: i,
        target,
        target_i,
        multiplier_log2: log2,
    })
}

/// Every rule application covering rank `i` of `src`.
pub fn applicable_reductions(src: TripleInstance, i: usize) -> Vec<ReductionStep> {
    ReductionRule::ALL
        .iter()
        .filter_map(|&r| apply_reduction(r, src, i).ok())
        .collect()
}

/// Follows non-identity steps until none applies; the last target is the
/// base of the chain.
pub fn reduction_chain(src: TripleInstance, i: usize) -> Vec<ReductionStep> {
    let mut steps = Vec::new();
    let (mut at, mut rank) = (src, i);
    while let Some(step) = applicable_reductions(at, rank)
        .into_iter()
        .find(|s| !s.is_identity())
    {
        steps.push(step);
        at = step.target;
        rank = step.target_i;
    }
    steps
}

/// How a count was obtained when checking an identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    ClosedForm { family: String },
    FreeRows,
    External,
}

/// `Γ_i` of a triple from closed forms alone: registry families, or the
/// free-row count when every block has one row.
pub fn resolve_closed_form(
    reg: &Registry,
    inst: TripleInstance,
    i: usize,
) -> Option<(BigUint, Resolved)> {
    let shape = inst.shape().ok()?;
    if i > shape.max_rank() {
        return Some((BigUint::zero(), Resolved::FreeRows));
    }
    if inst.s == 1 && inst.m == 0 && inst.l == 0 {
        return Some((free_block_counts(3, inst.k)[i].clone(), Resolved::FreeRows));
    }
    let e = reg.eval_shape(&shape).ok()?;
    Some((e.dist.get(i), Resolved::ClosedForm { family: e.family }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Agree,
    /// Both sides known and `source != multiplier * target`.
    Disagree,
    /// The target is unknown; all sources sharing it agree on its value.
    GroupAgree,
    /// The target is unknown and sources sharing it imply different values.
    GroupDisagree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionCheck {
    pub step: ReductionStep,
    pub source_value: BigUint,
    pub target_value: Option<BigUint>,
    pub target_origin: Option<Resolved>,
    pub outcome: CheckOutcome,
}

impl ReductionCheck {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, CheckOutcome::Agree | CheckOutcome::GroupAgree)
    }
}

/// Checks every non-identity rule application over `instances`. Sources
/// come from closed forms; targets from closed forms, then `external`
/// (e.g. enumeration). Unresolved targets are checked for agreement among
/// all sources mapping onto them.
pub fn check_reductions<F>(
    reg: &Registry,
    instances: impl IntoIterator<Item = TripleInstance>,
    mut external: F,
) -> Vec<ReductionCheck>
where
    F: FnMut(TripleInstance, usize) -> Option<BigUint>,
{
    let mut out = Vec::new();
    let mut pending: BTreeMap<(TripleInstance, usize), Vec<(usize, BigUint)>> = BTreeMap::new();
    let mut memo: BTreeMap<(TripleInstance, usize), Option<(BigUint, Resolved)>> = BTreeMap::new();
    for src in instances {
        let Ok(shape) = src.shape() else { continue };
        for i in 0..=shape.max_rank() {
            for step in applicable_reductions(src, i) {
                if step.is_identity() {
                    continue;
                }
                let Some((sv, _)) = resolve_closed_form(reg, src, i) else {
                    continue;
                };
                let key = (step.target, step.target_i);
                let tv = memo
                    .entry(key)
                    .or_insert_with(|| {
                        resolve_closed_form(reg, step.target, step.target_i).or_else(|| {
                            external(step.target, step.target_i).map(|v| (v, Resolved::External))
                        })
                    })
                    .clone();
                let (target_value, target_origin, outcome) = match tv {
                    Some((v, how)) => {
                        let ok = v.clone() << step.multiplier_log2 == sv;
                        let o = if ok { CheckOutcome::Agree } else { CheckOutcome::Disagree };
                        (Some(v), Some(how), o)
                    }
                    None => {
                        let mask = step.multiplier() - 1u32;
                        if !(&sv & &mask).is_zero() {
                            (None, None, CheckOutcome::Disagree)
                        } else {
                            pending
                                .entry(key)
                                .or_default()
                                .push((out.len(), &sv >> step.multiplier_log2));
                            (None, None, CheckOutcome::GroupAgree)
                        }
                    }
                };
                out.push(ReductionCheck {
                    step,
                    source_value: sv,
                    target_value,
                    target_origin,
                    outcome,
                });
            }
        }
    }
    for members in pending.values() {
        let first = &members[0].1;
        if members.iter().any(|(_, v)| v != first) {
            for (idx, _) in members {
                out[*idx].outcome = CheckOutcome::GroupDisagree;
            }
        }
    }
    out
}

/// The default formula-level grid: the two parametric triple families over
/// `k <= k_max` and `l <= l_max`.
pub fn default_grid(k_max: usize, l_max: usize) -> Vec<TripleInstance> {
    let mut v = Vec::new();
    for k in 1..=k_max {
        for l in 0..=l_max {
            v.push(TripleInstance::new(3, 0, l, k));
            if l >= 4 {
                v.push(TripleInstance::new(2, 3, l, k));
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::Enumerator;

    #[test]
    fn documented_applications() {
        let s = apply_reduction(ReductionRule::LastBlock, TripleInstance::new(3, 0, 2, 12), 8).unwrap();
        assert_eq!(s.j, 1);
        assert_eq!(s.multiplier(), BigUint::from(16u32));
        assert_eq!(s.target, TripleInstance::new(3, 0, 1, 11));
        assert_eq!(s.target_i, 7);

        for l in 0..6 {
            let k = 20;
            let s = apply_reduction(ReductionRule::S3AllBlocks, TripleInstance::new(3, 0, l, k), 8 + l)
                .unwrap();
            assert_eq!(s.j, 1);
            assert_eq!(s.multiplier_log2, 4 * l + 12);
            assert_eq!(s.target, TripleInstance::new(2, 0, 0, k - l - 3));
            assert_eq!(s.target_i, 5);
        }

        let s = apply_reduction(ReductionRule::LastBlock, TripleInstance::new(2, 3, 4, 10), 8).unwrap();
        assert!(s.is_identity());
        assert_eq!(s.multiplier_log2, 0);
    }

    #[test]
    fn out_of_range_ranks_are_rejected() {
        let src = TripleInstance::new(3, 0, 2, 12);
        assert!(apply_reduction(ReductionRule::LastBlock, src, 6).is_err());
        assert!(apply_reduction(ReductionRule::LastBlock, src, 10).is_err());
        assert!(apply_reduction(ReductionRule::S3LastBlock, TripleInstance::new(2, 3, 4, 20), 8).is_err());
        // k below the rank
        assert!(apply_reduction(ReductionRule::LastBlock, TripleInstance::new(3, 0, 2, 7), 8).is_err());
        assert!(applicable_reductions(src, 3).is_empty());
    }

    #[test]
    fn proof_rules_coincide_with_general_rules() {
        for l in 0..8 {
            for k in 1..30 {
                let src = TripleInstance::new(3, 0, l, k);
                for i in 0..=src.total_rows() {
                    let a = apply_reduction(ReductionRule::S3LastBlock, src, i).ok();
                    let b = apply_reduction(ReductionRule::LastBlock, src, i).ok();
                    assert_eq!(a.map(|s| (s.target, s.target_i, s.multiplier_log2)), b.map(|s| (s.target, s.target_i, s.multiplier_log2)));
                    let a = apply_reduction(ReductionRule::S3AllBlocks, src, i).ok();
                    let b = apply_reduction(ReductionRule::AllBlocks, src, i).ok();
                    assert_eq!(a.map(|s| (s.target, s.target_i, s.multiplier_log2)), b.map(|s| (s.target, s.target_i, s.multiplier_log2)));
                }
            }
        }
    }

    #[test]
    fn chain_trace() {
        let c = reduction_chain(TripleInstance::new(3, 0, 2, 12), 8);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].target, TripleInstance::new(3, 0, 1, 11));
        let c = reduction_chain(TripleInstance::new(3, 0, 2, 20), 11);
        let last = c.last().unwrap();
        assert_eq!(last.target, TripleInstance::new(1, 0, 0, 12));
        assert_eq!(last.target_i, 3);
    }

    #[test]
    fn identities_hold_on_enumerable_instances() {
        // every source and target small enough to enumerate directly
        let hist = |t: TripleInstance| Enumerator::new(&t.shape().unwrap()).unwrap().histogram();
        for (s, m, l) in [(1, 0, 1), (1, 1, 1), (2, 0, 1), (1, 2, 0), (2, 1, 0), (1, 0, 3)] {
            for k in 1..=5 {
                let src = TripleInstance::new(s, m, l, k);
                if src.shape().unwrap().free_param_count() > 20 {
                    continue;
                }
                let h = hist(src);
                for i in 0..h.len() {
                    for st in applicable_reductions(src, i) {
                        let t = hist(st.target);
                        let tv = t.get(st.target_i).copied().unwrap_or(0);
                        assert_eq!(h[i], tv << st.multiplier_log2, "{st}");
                    }
                }
            }
        }
    }

    #[test]
    fn formula_level_grid_is_consistent() {
        let reg = Registry::builtin();
        let checks = check_reductions(&reg, default_grid(30, 8), |_, _| None);
        assert!(checks.len() > 500);
        let bad: Vec<_> = checks.iter().filter(|c| !c.passed()).collect();
        assert!(bad.is_empty(), "{} failures, first: {}", bad.len(), bad[0].step);
        assert!(checks.iter().any(|c| c.outcome == CheckOutcome::Agree && c.target_origin == Some(Resolved::FreeRows)));
    }
}
