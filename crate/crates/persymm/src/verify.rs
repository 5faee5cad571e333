//! Closed forms checked against independent references.
//!
//! Each `(family, k, p)` point is compared against, in order of preference:
//! the oracle when the shape fits the budget; the oracle on the shape
//! without its trailing free rows followed by the extension transform; or,
//! for triples, the reduction chain of every covered rank, ending at the
//! first target the oracle can afford (a closed form otherwise).

use std::fmt;

use num_bigint::BigUint;
use persymm_core::extension::extend_free_rows;
use persymm_core::reduction::{reduction_chain, resolve_closed_form};
use persymm_core::registry::RegistryError;
use persymm_core::shape::BlockKind;
use persymm_core::registry::TablePolicy;
use persymm_core::{RankDistribution, Registry, StackedShape, TripleInstance};

use crate::cache::OracleMemo;
use crate::oracle::EnumerationBudget;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    Oracle,
    /// Oracle on `base`, extended by free rows.
    Extension { base: String },
    /// `covered` of `ranks` ranks checked through reduction chains;
    /// `oracle_targets` of those ended at an enumerated target.
    Reduction {
        covered: usize,
        ranks: usize,
        oracle_targets: usize,
    },
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Oracle => f.write_str("oracle"),
            Reference::Extension { base } => write!(f, "extension of oracle {base}"),
            Reference::Reduction {
                covered,
                ranks,
                oracle_targets,
            } => write!(
                f,
                "reduction ({covered}/{ranks} ranks, {oracle_targets} via oracle targets)"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMismatch {
    pub i: usize,
    pub formula: BigUint,
    pub reference: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointStatus {
    Verified(Reference),
    Mismatch {
        reference: Reference,
        ranks: Vec<RankMismatch>,
    },
    /// Nothing to compare: outside the family's validity or beyond every
    /// reference within budget.
    Skipped(String),
    /// The closed form itself failed (negative count, mass identity).
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointReport {
    pub family: String,
    pub k: i64,
    pub p: Option<i64>,
    pub shape: String,
    pub status: PointStatus,
}

impl PointReport {
    pub fn is_failure(&self) -> bool {
        matches!(
            self.status,
            PointStatus::Mismatch { .. } | PointStatus::Failed(_)
        )
    }
}

impl fmt::Display for PointReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} k={}", self.family, self.k)?;
        if let Some(p) = self.p {
            write!(f, " p={p}")?;
        }
        if !self.shape.is_empty() {
            write!(f, " {}", self.shape)?;
        }
        match &self.status {
            PointStatus::Verified(r) => write!(f, ": ok [{r}]"),
            PointStatus::Skipped(why) => write!(f, ": skipped ({why})"),
            PointStatus::Failed(why) => write!(f, ": FAILED {why}"),
            PointStatus::Mismatch { reference, ranks } => {
                write!(f, ": MISMATCH [{reference}]")?;
                for m in ranks {
                    write!(f, "\n    i={}: formula {} reference {}", m.i, m.formula, m.reference)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub points: Vec<PointReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &PointReport> {
        self.points.iter().filter(|p| p.is_failure())
    }

    pub fn failure_count(&self) -> usize {
        self.failures().count()
    }

    pub fn verified_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| matches!(p.status, PointStatus::Verified(_)))
            .count()
    }

    pub fn skipped_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| matches!(p.status, PointStatus::Skipped(_)))
            .count()
    }

    pub fn is_clean(&self) -> bool {
        self.failure_count() == 0
    }

    pub fn merge(&mut self, other: VerifyReport) {
        self.points.extend(other.points);
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.points {
            writeln!(f, "{p}")?;
        }
        write!(
            f,
            "{} verified, {} skipped, {} failed",
            self.verified_count(),
            self.skipped_count(),
            self.failure_count()
        )
    }
}

/// The triple a three-block persymmetric shape with non-decreasing heights
/// spells.
pub fn triple_of(shape: &StackedShape) -> Option<TripleInstance> {
    let b = shape.blocks();
    if b.len() != 3 || b.iter().any(|x| x.kind != BlockKind::Persymmetric) {
        return None;
    }
    let (a, m, l) = (
        b[0].rows,
        b[1].rows.checked_sub(b[0].rows)?,
        b[2].rows.checked_sub(b[1].rows)?,
    );
    Some(TripleInstance::new(a, m, l, shape.cols()))
}

fn compare(formula: &RankDistribution, reference: &RankDistribution) -> Vec<RankMismatch> {
    (0..=formula.max_rank().max(reference.max_rank()))
        .filter_map(|i| {
            let (a, b) = (formula.get(i), reference.get(i));
            (a != b).then_some(RankMismatch {
                i,
                formula: a,
                reference: b,
            })
        })
        .collect()
}

pub struct Verifier<'a> {
    registry: &'a Registry,
    budget: EnumerationBudget,
    memo: OracleMemo,
}

impl<'a> Verifier<'a> {
    pub fn new(registry: &'a Registry, budget: EnumerationBudget, memo: OracleMemo) -> Self {
        Self {
            registry,
            budget,
            memo,
        }
    }

    pub fn budget(&self) -> &EnumerationBudget {
        &self.budget
    }

    /// Hands back the oracle memo for reuse.
    pub fn into_memo(self) -> OracleMemo {
        self.memo
    }

    fn oracle(&mut self, shape: &StackedShape) -> Option<Result<RankDistribution, String>> {
        self.budget
            .allows(shape.free_param_count())
            .then(|| {
                self.memo
                    .distribution(shape, &self.budget)
                    .map_err(|e| e.to_string())
            })
    }

    pub fn verify_point(&mut self, id: &str, k: i64, p: Option<i64>) -> PointReport {
        let mut report = PointReport {
            family: id.to_owned(),
            k,
            p,
            shape: String::new(),
            status: PointStatus::Skipped(String::new()),
        };
        let eval = match self.registry.evaluate(id, k, p, TablePolicy::Prefer) {
            Ok(e) => e,
            Err(
                e @ (RegistryError::OutOfValidity { .. }
                | RegistryError::FixedColumns { .. }
                | RegistryError::ParamOutOfRange { .. }
                | RegistryError::Shape(_)),
            ) => {
                report.status = PointStatus::Skipped(e.to_string());
                return report;
            }
            Err(e) => {
                report.status = PointStatus::Failed(e.to_string());
                return report;
            }
        };
        report.shape = eval.shape.canonical_string();
        report.status = self.check(&eval.shape, &eval.dist);
        report
    }

    fn check(&mut self, shape: &StackedShape, formula: &RankDistribution) -> PointStatus {
        let settle = |reference: Reference, ranks: Vec<RankMismatch>| {
            if ranks.is_empty() {
                PointStatus::Verified(reference)
            } else {
                PointStatus::Mismatch { reference, ranks }
            }
        };
        match self.oracle(shape) {
            Some(Ok(d)) => return settle(Reference::Oracle, compare(formula, &d)),
            Some(Err(e)) => return PointStatus::Failed(e),
            None => {}
        }
        if let Some((base, t)) = shape.split_trailing_free() {
            match self.oracle(&base) {
                Some(Ok(d)) => {
                    return match extend_free_rows(&d, t, shape.cols()) {
                        Ok(ext) => settle(
                            Reference::Extension {
                                base: base.canonical_string(),
                            },
                            compare(formula, &ext),
                        ),
                        Err(e) => PointStatus::Failed(e.to_string()),
                    }
                }
                Some(Err(e)) => return PointStatus::Failed(e),
                None => {}
            }
        }
        if let Some(inst) = triple_of(shape) {
            return self.check_by_reduction(inst, formula);
        }
        PointStatus::Skipped(format!(
            "2^{} states exceed the budget and no chain applies",
            shape.free_param_count()
        ))
    }

    /// `Γ_i` of the chain end, preferring the first target along the chain
    /// that the oracle can afford. Returns the value, the accumulated
    /// multiplier exponent, and whether the oracle supplied it.
    fn chain_value(&mut self, inst: TripleInstance, i: usize) -> Option<Result<(BigUint, bool), String>> {
        let chain = reduction_chain(inst, i);
        if chain.is_empty() {
            return None;
        }
        let mut log2 = 0;
        for step in &chain {
            log2 += step.multiplier_log2;
            let Ok(target) = step.target.shape() else {
                continue;
            };
            match self.oracle(&target) {
                Some(Ok(d)) => return Some(Ok((d.get(step.target_i) << log2, true))),
                Some(Err(e)) => return Some(Err(e)),
                None => {}
            }
        }
        let last = chain.last().expect("non-empty");
        let (v, _) = resolve_closed_form(self.registry, last.target, last.target_i)?;
        Some(Ok((v << log2, false)))
    }

    fn check_by_reduction(&mut self, inst: TripleInstance, formula: &RankDistribution) -> PointStatus {
        let ranks = formula.max_rank() + 1;
        let (mut covered, mut oracle_targets) = (0, 0);
        let mut bad = Vec::new();
        for i in 0..ranks {
            match self.chain_value(inst, i) {
                None => {}
                Some(Err(e)) => return PointStatus::Failed(e),
                Some(Ok((v, via_oracle))) => {
                    covered += 1;
                    oracle_targets += usize::from(via_oracle);
                    if v != formula.get(i) {
                        bad.push(RankMismatch {
                            i,
                            formula: formula.get(i),
                            reference: v,
                        });
                    }
                }
            }
        }
        if covered == 0 {
            return PointStatus::Skipped(format!(
                "{inst} exceeds the budget and no reduction covers its ranks"
            ));
        }
        let reference = Reference::Reduction {
            covered,
            ranks,
            oracle_targets,
        };
        if bad.is_empty() {
            PointStatus::Verified(reference)
        } else {
            PointStatus::Mismatch {
                reference,
                ranks: bad,
            }
        }
    }

    pub fn verify_family(
        &mut self,
        id: &str,
        ks: impl IntoIterator<Item = i64>,
        ps: &[Option<i64>],
    ) -> VerifyReport {
        let mut report = VerifyReport::default();
        for k in ks {
            for &p in ps {
                report.points.push(self.verify_point(id, k, p));
            }
        }
        report
    }

    /// Every built-in family over [`default_grid`].
    pub fn verify_all(&mut self) -> VerifyReport {
        let mut report = VerifyReport::default();
        for (id, ks, ps) in default_grid(self.registry) {
            report.merge(self.verify_family(&id, ks, &ps));
        }
        report
    }
}

/// Per-family `(id, k values, parameter values)` for [`Verifier::verify_all`].
/// Fixed-column families use their one `k`; parametric triples run to
/// `k = 30`, `l = 8` and rely on reductions past the budget.
pub fn default_grid(registry: &Registry) -> Vec<(String, Vec<i64>, Vec<Option<i64>>)> {
    registry
        .families()
        .iter()
        .map(|fam| {
            let ks: Vec<i64> = match fam.template.fixed_cols() {
                Some(c) => vec![c],
                None if fam.id.starts_with("triple") => (1..=30).collect(),
                None if fam.id == "single" => (1..=8).collect(),
                None => (1..=12).collect(),
            };
            let ps: Vec<Option<i64>> = match &fam.param {
                None => vec![None],
                Some(r) => {
                    let hi = r.max.unwrap_or(match fam.id.as_str() {
                        "single" => 8,
                        "nfold1" => 16,
                        _ => 8,
                    });
                    (r.min..=hi).map(Some).collect()
                }
            };
            (fam.id.clone(), ks, ps)
        })
        .collect()
}
