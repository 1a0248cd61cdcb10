//! Worst-case deviations from measurement independence, outcome
//! independence, parameter independence and factorability.
//!
//! Every deviation is a maximum absolute difference over all assignments of
//! the hidden subset, settings and outcomes, reported with the assignment
//! that attains it. Conditioning events of probability zero are skipped.

use rayon::prelude::*;

use crate::chsh::SETTING_PAIRS;
use crate::error::{Error, Result};
use crate::gibbs::DistributionTable;
use crate::lattice::RoleAssignment;
use crate::scalar::Scalar;

/// Assignment at which a deviation is attained.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Witness {
    /// Spin on each site of the lambda subset, in subset order.
    pub lambda: Vec<i8>,
    pub settings: (i8, i8),
    /// Second setting pair, for the MI comparison.
    pub other_settings: Option<(i8, i8)>,
    pub outcome1: Option<i8>,
    pub outcome2: Option<i8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deviation<T> {
    pub value: T,
    pub witness: Witness,
}

impl<T: Scalar> Deviation<T> {
    fn zero() -> Self {
        Self { value: T::zero(), witness: Witness::default() }
    }

    fn offer(&mut self, value: T, witness: impl FnOnce() -> Witness) {
        if value > self.value {
            self.value = value;
            self.witness = witness();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndependenceReport<T> {
    pub lambda_subset: Vec<usize>,
    pub mi: Deviation<T>,
    pub oi: Deviation<T>,
    pub pi: Deviation<T>,
    pub factorability: Deviation<T>,
    /// Largest total-variation distance between `P(λ | s)` and `P(λ | s')`.
    pub mi_total_variation: T,
}

/// Joint table of (σ1, σ2, σ_a, σ_b, λ) with accessor helpers.
///
/// Index bit 0 is σ1, bit 1 σ2, bit 2 σ_a, bit 3 σ_b, bits 4.. the lambda
/// subset; a set bit means spin up.
struct Joint<T> {
    table: Vec<T>,
    n_lambda: usize,
}

fn bit(s: i8) -> usize {
    usize::from(s > 0)
}

fn spin(b: usize) -> i8 {
    if b == 1 {
        1
    } else {
        -1
    }
}

impl<T: Scalar> Joint<T> {
    fn new(dist: &DistributionTable<T>, roles: &RoleAssignment, lambda: &[usize]) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().any(|s| !roles.hidden.contains(s)) {
            return Err(Error::EmptyLambdaSubset);
        }
        let mut sites = vec![roles.outcome1, roles.outcome2, roles.setting_a, roles.setting_b];
        sites.extend_from_slice(lambda);
        Ok(Self { table: dist.project(&sites)?, n_lambda: lambda.len() })
    }

    fn lambdas(&self) -> std::ops::Range<usize> {
        0..1 << self.n_lambda
    }

    fn lambda_spins(&self, l: usize) -> Vec<i8> {
        (0..self.n_lambda).map(|j| spin((l >> j) & 1)).collect()
    }

    /// Sum over every full entry where each `Some` coordinate matches.
    fn p(&self, s1: Option<i8>, s2: Option<i8>, a: Option<i8>, b: Option<i8>, l: Option<usize>) -> T {
        let mut total = T::zero();
        for (k, &v) in self.table.iter().enumerate() {
            let keep = s1.is_none_or(|s| bit(s) == k & 1)
                && s2.is_none_or(|s| bit(s) == (k >> 1) & 1)
                && a.is_none_or(|s| bit(s) == (k >> 2) & 1)
                && b.is_none_or(|s| bit(s) == (k >> 3) & 1)
                && l.is_none_or(|l| l == k >> 4);
            if keep {
                total = total + v;
            }
        }
        total
    }
}

fn witness(lambda: Vec<i8>, a: i8, b: i8, s1: Option<i8>, s2: Option<i8>) -> Witness {
    Witness { lambda, settings: (a, b), other_settings: None, outcome1: s1, outcome2: s2 }
}

fn ratio<T: Scalar>(num: T, den: T) -> Option<T> {
    (den > T::zero()).then(|| num / den)
}

/// `max |P(λ | a, b) - P(λ | a', b')|` over setting pairs and λ.
pub fn mi_deviation<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    lambda: &[usize],
) -> Result<Deviation<T>> {
    Ok(mi_with_tv(&Joint::new(dist, roles, lambda)?).0)
}

fn mi_with_tv<T: Scalar>(j: &Joint<T>) -> (Deviation<T>, T) {
    let cond: Vec<Vec<Option<T>>> = SETTING_PAIRS
        .iter()
        .map(|&(a, b)| {
            let pab = j.p(None, None, Some(a), Some(b), None);
            j.lambdas().map(|l| ratio(j.p(None, None, Some(a), Some(b), Some(l)), pab)).collect()
        })
        .collect();
    let mut dev = Deviation::zero();
    let mut tv = T::zero();
    for x in 0..4 {
        for y in (x + 1)..4 {
            let mut dist_xy = T::zero();
            for l in j.lambdas() {
                let (Some(px), Some(py)) = (cond[x][l], cond[y][l]) else { continue };
                let d = (px - py).abs();
                dist_xy = dist_xy + d;
                dev.offer(d, || Witness {
                    lambda: j.lambda_spins(l),
                    settings: SETTING_PAIRS[x],
                    other_settings: Some(SETTING_PAIRS[y]),
                    outcome1: None,
                    outcome2: None,
                });
            }
            tv = tv.max(dist_xy / T::lit(2.0));
        }
    }
    (dev, tv)
}

/// `max |P(σ1 | σ2, a, b, λ) - P(σ1 | a, b, λ)|`, and the same with the
/// outcomes exchanged.
pub fn oi_deviation<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    lambda: &[usize],
) -> Result<Deviation<T>> {
    Ok(oi(&Joint::new(dist, roles, lambda)?))
}

fn oi<T: Scalar>(j: &Joint<T>) -> Deviation<T> {
    let mut dev = Deviation::zero();
    for l in j.lambdas() {
        for (a, b) in SETTING_PAIRS {
            let pabl = j.p(None, None, Some(a), Some(b), Some(l));
            for s1 in [1, -1] {
                for s2 in [1, -1] {
                    let joint = j.p(Some(s1), Some(s2), Some(a), Some(b), Some(l));
                    let p1 = ratio(j.p(Some(s1), None, Some(a), Some(b), Some(l)), pabl);
                    let p2 = ratio(j.p(None, Some(s2), Some(a), Some(b), Some(l)), pabl);
                    let p1_given_2 = ratio(joint, j.p(None, Some(s2), Some(a), Some(b), Some(l)));
                    let p2_given_1 = ratio(joint, j.p(Some(s1), None, Some(a), Some(b), Some(l)));
                    for (x, y) in [(p1_given_2, p1), (p2_given_1, p2)] {
                        if let (Some(x), Some(y)) = (x, y) {
                            dev.offer((x - y).abs(), || witness(j.lambda_spins(l), a, b, Some(s1), Some(s2)));
                        }
                    }
                }
            }
        }
    }
    dev
}

/// `max |P(σ2 | a, b, λ) - P(σ2 | b, λ)|` and the mirror
/// `max |P(σ1 | a, b, λ) - P(σ1 | a, λ)|`.
pub fn pi_deviation<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    lambda: &[usize],
) -> Result<Deviation<T>> {
    Ok(pi(&Joint::new(dist, roles, lambda)?))
}

fn pi<T: Scalar>(j: &Joint<T>) -> Deviation<T> {
    let mut dev = Deviation::zero();
    for l in j.lambdas() {
        for (a, b) in SETTING_PAIRS {
            let pabl = j.p(None, None, Some(a), Some(b), Some(l));
            let pbl = j.p(None, None, None, Some(b), Some(l));
            let pal = j.p(None, None, Some(a), None, Some(l));
            for s in [1, -1] {
                let local2 = ratio(j.p(None, Some(s), Some(a), Some(b), Some(l)), pabl);
                let remote2 = ratio(j.p(None, Some(s), None, Some(b), Some(l)), pbl);
                if let (Some(x), Some(y)) = (local2, remote2) {
                    dev.offer((x - y).abs(), || witness(j.lambda_spins(l), a, b, None, Some(s)));
                }
                let local1 = ratio(j.p(Some(s), None, Some(a), Some(b), Some(l)), pabl);
                let remote1 = ratio(j.p(Some(s), None, Some(a), None, Some(l)), pal);
                if let (Some(x), Some(y)) = (local1, remote1) {
                    dev.offer((x - y).abs(), || witness(j.lambda_spins(l), a, b, Some(s), None));
                }
            }
        }
    }
    dev
}

/// `max |P(σ1, σ2 | a, b, λ) - P(σ1 | a, λ) P(σ2 | b, λ)|`.
pub fn factorability_deviation<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    lambda: &[usize],
) -> Result<Deviation<T>> {
    Ok(factorability(&Joint::new(dist, roles, lambda)?))
}

fn factorability<T: Scalar>(j: &Joint<T>) -> Deviation<T> {
    let mut dev = Deviation::zero();
    for l in j.lambdas() {
        for (a, b) in SETTING_PAIRS {
            let pabl = j.p(None, None, Some(a), Some(b), Some(l));
            let pal = j.p(None, None, Some(a), None, Some(l));
            let pbl = j.p(None, None, None, Some(b), Some(l));
            for s1 in [1, -1] {
                for s2 in [1, -1] {
                    let lhs = ratio(j.p(Some(s1), Some(s2), Some(a), Some(b), Some(l)), pabl);
                    let r1 = ratio(j.p(Some(s1), None, Some(a), None, Some(l)), pal);
                    let r2 = ratio(j.p(None, Some(s2), None, Some(b), Some(l)), pbl);
                    if let (Some(lhs), Some(r1), Some(r2)) = (lhs, r1, r2) {
                        dev.offer((lhs - r1 * r2).abs(), || witness(j.lambda_spins(l), a, b, Some(s1), Some(s2)));
                    }
                }
            }
        }
    }
    dev
}

/// All four deviations on one lambda subset.
pub fn diagnose<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    lambda: &[usize],
) -> Result<IndependenceReport<T>> {
    let j = Joint::new(dist, roles, lambda)?;
    let (mi, mi_total_variation) = mi_with_tv(&j);
    Ok(IndependenceReport {
        lambda_subset: lambda.to_vec(),
        mi,
        oi: oi(&j),
        pi: pi(&j),
        factorability: factorability(&j),
        mi_total_variation,
    })
}

/// Largest hidden set for which [`sweep_subsets`] enumerates every subset.
pub const MAX_SWEEP_HIDDEN: usize = 8;

/// Diagnostics for every non-empty subset of the hidden sites, ordered by
/// subset bitmask over `roles.hidden`.
pub fn sweep_subsets<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
) -> Result<Vec<IndependenceReport<T>>> {
    let h = roles.hidden.len();
    if h == 0 {
        return Err(Error::EmptyLambdaSubset);
    }
    if h > MAX_SWEEP_HIDDEN {
        return Err(Error::InvalidAssignment(format!(
            "{h} hidden sites; subset sweeps support at most {MAX_SWEEP_HIDDEN}"
        )));
    }
    (1usize..1 << h)
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<usize> = (0..h).filter(|j| (mask >> j) & 1 == 1).map(|j| roles.hidden[j]).collect();
            diagnose(dist, roles, &subset)
        })
        .collect()
}
