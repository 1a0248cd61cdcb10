//! Post-selected correlators, the CHSH combination and the pairwise
//! correlation census.

use std::fmt;

use crate::error::Result;
use crate::gibbs::{DistributionTable, PartialAssignment};
use crate::lattice::{spin_at, RoleAssignment};
use crate::scalar::{pairwise_sum, Scalar};

/// The four setting pairs in report order: `(+,+)`, `(-,+)`, `(+,-)`, `(-,-)`.
pub const SETTING_PAIRS: [(i8, i8); 4] = [(1, 1), (-1, 1), (1, -1), (-1, -1)];

/// Which correlator carries the minus sign in the CHSH sum.
///
/// Setting `+1` plays the unprimed analyzer position and `-1` the primed one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SignConvention {
    /// `M(+,+) + M(-,+) + M(+,-) - M(-,-)`.
    #[default]
    MinusOnMm,
    MinusOnPp,
    MinusOnMp,
    MinusOnPm,
    /// The largest of the four placements above.
    Max,
}

impl SignConvention {
    pub const PLACEMENTS: [SignConvention; 4] =
        [SignConvention::MinusOnMm, SignConvention::MinusOnPp, SignConvention::MinusOnMp, SignConvention::MinusOnPm];

    /// Setting pair whose correlator is subtracted.
    fn negated(self) -> Option<(i8, i8)> {
        match self {
            SignConvention::MinusOnMm => Some((-1, -1)),
            SignConvention::MinusOnPp => Some((1, 1)),
            SignConvention::MinusOnMp => Some((-1, 1)),
            SignConvention::MinusOnPm => Some((1, -1)),
            SignConvention::Max => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignConvention::MinusOnMm => "minus-mm",
            SignConvention::MinusOnPp => "minus-pp",
            SignConvention::MinusOnMp => "minus-mp",
            SignConvention::MinusOnPm => "minus-pm",
            SignConvention::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::PLACEMENTS.into_iter().chain([SignConvention::Max]).find(|c| c.name() == s)
    }

    /// Combines four correlators under this convention. For [`Self::Max`]
    /// also returns the placement that achieved the maximum.
    pub fn combine<T: Scalar>(self, m: &Correlators<T>) -> (T, SignConvention) {
        match self.negated() {
            Some(neg) => {
                let x = SETTING_PAIRS
                    .iter()
                    .map(|&p| if p == neg { -m.get(p.0, p.1) } else { m.get(p.0, p.1) })
                    .fold(T::zero(), |acc, v| acc + v);
                (x, self)
            }
            None => Self::PLACEMENTS
                .into_iter()
                .map(|c| c.combine(m))
                .fold(None, |best: Option<(T, SignConvention)>, cur| match best {
                    Some(b) if b.0 >= cur.0 => Some(b),
                    _ => Some(cur),
                })
                .expect("four placements"),
        }
    }
}

impl fmt::Display for SignConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `M(a, b)` for the four setting pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlators<T> {
    pub pp: T,
    pub mp: T,
    pub pm: T,
    pub mm: T,
}

impl<T: Copy> Correlators<T> {
    pub fn get(&self, a: i8, b: i8) -> T {
        match (a > 0, b > 0) {
            (true, true) => self.pp,
            (false, true) => self.mp,
            (true, false) => self.pm,
            (false, false) => self.mm,
        }
    }

    pub fn from_fn(mut f: impl FnMut(i8, i8) -> T) -> Self {
        Self { pp: f(1, 1), mp: f(-1, 1), pm: f(1, -1), mm: f(-1, -1) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChshReport<T> {
    pub m: Correlators<T>,
    pub x_bi: T,
    /// The convention requested; for `Max` see `achieved_by`.
    pub convention: SignConvention,
    /// Placement whose value is reported in `x_bi`.
    pub achieved_by: SignConvention,
    /// `P(σ_a, σ_b)` for each setting pair.
    pub setting_probs: Correlators<T>,
}

impl<T: Scalar> ChshReport<T> {
    pub fn violates(&self) -> bool {
        self.x_bi.abs() > T::lit(2.0)
    }
}

/// `Σ σ1 σ2 P(σ1, σ2 | σ_a = a, σ_b = b)`, each term a conditional query on
/// the table.
pub fn correlator<T: Scalar>(dist: &DistributionTable<T>, roles: &RoleAssignment, a: i8, b: i8) -> Result<T> {
    let given = PartialAssignment::new().with(roles.setting_a, a)?.with(roles.setting_b, b)?;
    let mut total = T::zero();
    for s1 in [1i8, -1] {
        for s2 in [1i8, -1] {
            let target = PartialAssignment::new().with(roles.outcome1, s1)?.with(roles.outcome2, s2)?;
            total = total + T::spin(s1 * s2) * dist.conditional(&target, &given)?;
        }
    }
    Ok(total)
}

/// The same correlator summed directly over configurations:
/// `Σ_θ σ1 σ2 P(θ) / P(a, b)` over the post-selected subensemble.
pub fn correlator_by_configuration<T: Scalar>(dist: &DistributionTable<T>, roles: &RoleAssignment, a: i8, b: i8) -> T {
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (i, &p) in dist.probs().iter().enumerate() {
        let i = i as u64;
        if spin_at(i, roles.setting_a) == a && spin_at(i, roles.setting_b) == b {
            num.push(T::spin(spin_at(i, roles.outcome1) * spin_at(i, roles.outcome2)) * p);
            den.push(p);
        }
    }
    pairwise_sum(&num) / pairwise_sum(&den)
}

pub fn correlators<T: Scalar>(dist: &DistributionTable<T>, roles: &RoleAssignment) -> Result<Correlators<T>> {
    Ok(Correlators {
        pp: correlator(dist, roles, 1, 1)?,
        mp: correlator(dist, roles, -1, 1)?,
        pm: correlator(dist, roles, 1, -1)?,
        mm: correlator(dist, roles, -1, -1)?,
    })
}

pub fn chsh<T: Scalar>(
    dist: &DistributionTable<T>,
    roles: &RoleAssignment,
    convention: SignConvention,
) -> Result<ChshReport<T>> {
    let m = correlators(dist, roles)?;
    let (x_bi, achieved_by) = convention.combine(&m);
    let mut setting = [T::zero(); 4];
    for (k, &(a, b)) in SETTING_PAIRS.iter().enumerate() {
        setting[k] = dist.marginal(&PartialAssignment::new().with(roles.setting_a, a)?.with(roles.setting_b, b)?)?;
    }
    Ok(ChshReport {
        m,
        x_bi,
        convention,
        achieved_by,
        setting_probs: Correlators { pp: setting[0], mp: setting[1], pm: setting[2], mm: setting[3] },
    })
}

/// Dependence between every pair of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseCorrelations<T> {
    /// `max_{ε,δ} |P(σ_i=ε, σ_j=δ) - P(σ_i=ε) P(σ_j=δ)|`; zero on the diagonal.
    pub matrix: Vec<Vec<T>>,
    pub threshold: T,
    /// Every off-diagonal entry exceeds the threshold.
    pub fully_correlated: bool,
}

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 1e-9;

pub fn pairwise_correlations<T: Scalar>(dist: &DistributionTable<T>, threshold: T) -> Result<PairwiseCorrelations<T>> {
    let n = dist.n_sites();
    let single: Vec<T> = (0..n).map(|i| dist.project(&[i]).map(|t| t[1])).collect::<Result<_>>()?;
    let mut matrix = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let joint = dist.project(&[i, j])?;
            let mut worst = T::zero();
            for (k, &pk) in joint.iter().enumerate() {
                let pi = if k & 1 == 1 { single[i] } else { T::one() - single[i] };
                let pj = if k & 2 == 2 { single[j] } else { T::one() - single[j] };
                worst = worst.max((pk - pi * pj).abs());
            }
            matrix[i][j] = worst;
            matrix[j][i] = worst;
        }
    }
    let fully_correlated = n > 1 && (0..n).all(|i| (0..n).all(|j| i == j || matrix[i][j] > threshold));
    Ok(PairwiseCorrelations { matrix, threshold, fully_correlated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fig1_default;
    use crate::gibbs::build_distribution;
    use crate::lattice::{Edge, LatticeSpec};

    fn product_spec(h: f64) -> LatticeSpec<f64> {
        let roles = RoleAssignment::with_remaining_hidden(5, 0, 1, 2, 3);
        LatticeSpec::new(5, vec![], vec![h; 5], 1.0).unwrap().with_roles(roles).unwrap()
    }

    #[test]
    fn independent_outcomes() {
        let spec = product_spec(1.0);
        let d = build_distribution(&spec, 24).unwrap();
        let t2 = 1f64.tanh().powi(2);
        assert!((t2 - 0.580_026).abs() < 1e-6);
        for (a, b) in SETTING_PAIRS {
            assert!((correlator(&d, spec.roles().unwrap(), a, b).unwrap() - t2).abs() < 1e-12);
        }
        let r = chsh(&d, spec.roles().unwrap(), SignConvention::default()).unwrap();
        assert!((r.x_bi - 2.0 * t2).abs() < 1e-12);
        assert!((r.x_bi - 1.160_052).abs() < 1e-6);
        assert!(!r.violates());
        let total = r.setting_probs.pp + r.setting_probs.mp + r.setting_probs.pm + r.setting_probs.mm;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_flip_symmetry() {
        let spec = fig1_default::<f64>(1.3, 0.0);
        let d = build_distribution(&spec, 24).unwrap();
        let roles = spec.roles().unwrap();
        for (a, b) in SETTING_PAIRS {
            let m = correlator(&d, roles, a, b).unwrap();
            let flipped = correlator(&d, roles, -a, -b).unwrap();
            assert!((m - flipped).abs() < 1e-12);
        }
    }

    #[test]
    fn conventions() {
        let m = Correlators { pp: 0.9f64, mp: 0.8, pm: 0.7, mm: -0.2 };
        assert!((SignConvention::MinusOnMm.combine(&m).0 - 2.6).abs() < 1e-12);
        assert!((SignConvention::MinusOnPp.combine(&m).0 - 0.4).abs() < 1e-12);
        let (best, by) = SignConvention::Max.combine(&m);
        assert_eq!(by, SignConvention::MinusOnMm);
        assert!((best - 2.6).abs() < 1e-12);
        for c in SignConvention::PLACEMENTS {
            assert_eq!(SignConvention::parse(c.name()), Some(c));
        }
    }

    #[test]
    fn relabeling_setting_signs_permutes_placements() {
        // swapping which value of σ_a counts as primed maps the minus on
        // (-,-) to the minus on (+,-)
        let m = Correlators { pp: 0.3f64, mp: 0.1, pm: -0.6, mm: 0.45 };
        let swapped = Correlators::from_fn(|a, b| m.get(-a, b));
        assert!(
            (SignConvention::MinusOnMm.combine(&swapped).0 - SignConvention::MinusOnPm.combine(&m).0).abs() < 1e-15
        );
        assert!((SignConvention::Max.combine(&swapped).0 - SignConvention::Max.combine(&m).0).abs() < 1e-15);
    }

    #[test]
    fn two_routes_agree() {
        let spec = fig1_default::<f64>(1.4, 1.0).with_field_at(2, -0.5).unwrap();
        let d = build_distribution(&spec, 24).unwrap();
        let roles = spec.roles().unwrap();
        for (a, b) in SETTING_PAIRS {
            let x = correlator(&d, roles, a, b).unwrap();
            let y = correlator_by_configuration(&d, roles, a, b);
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_census() {
        let d = build_distribution(&product_spec(0.4), 24).unwrap();
        let pc = pairwise_correlations(&d, DEFAULT_CORRELATION_THRESHOLD).unwrap();
        assert!(pc.matrix.iter().flatten().all(|&v| v.abs() < 1e-12));
        assert!(!pc.fully_correlated);

        let pair = LatticeSpec::new(2, vec![Edge::new(0, 1, 1.0)], vec![0.0; 2], 1.0).unwrap();
        let d = build_distribution(&pair, 24).unwrap();
        let pc = pairwise_correlations(&d, DEFAULT_CORRELATION_THRESHOLD).unwrap();
        // four-term table: P(++) = e/(2e + 2/e), marginals 1/2
        let e = 1f64.exp();
        let expected = e / (2.0 * e + 2.0 / e) - 0.25;
        assert!((pc.matrix[0][1] - expected).abs() < 1e-12);
        assert!(pc.matrix[0][1] > 0.19);
        assert!(pc.fully_correlated);

        let spec = fig1_default::<f64>(1.4, 1.0);
        let d = build_distribution(&spec, 24).unwrap();
        assert!(pairwise_correlations(&d, DEFAULT_CORRELATION_THRESHOLD).unwrap().fully_correlated);
    }
}
