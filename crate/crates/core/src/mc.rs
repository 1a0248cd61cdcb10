//! Single-spin-flip Metropolis sampling of the classical Boltzmann
//! distribution, with batch-means error bars.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)`; chain `k` uses stream `k` of that key. Each sweep
//! makes one update attempt per free site, at uniformly chosen free sites.
//!
//! Post-selected correlators can be estimated two ways: by counting within
//! the retained samples ([`McRun::correlator`]), or by sampling the
//! conditional distribution with both setting spins clamped
//! ([`conditional_chsh`]). The second works even when a setting pair is
//! too rare to ever be visited.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chsh::{Correlators, SignConvention, SETTING_PAIRS};
use crate::error::{Error, Result};
use crate::gibbs::PartialAssignment;
use crate::lattice::{spin_at, LatticeSpec, RoleAssignment};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub seed: u64,
    /// Total sweeps per chain, burn-in included.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Keep one sample every `thinning` sweeps after burn-in.
    pub thinning: usize,
    /// Batches per chain.
    pub batch_count: usize,
    pub chains: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { seed: 42, sweeps: 202_000, burn_in: 2_000, thinning: 1, batch_count: 50, chains: 4 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidMcConfig(m.into()));
        if self.sweeps <= self.burn_in {
            return bad("sweeps must exceed burn-in");
        }
        if self.thinning == 0 || self.batch_count == 0 || self.chains == 0 {
            return bad("thinning, batch count and chain count must be positive");
        }
        let kept = self.retained_per_chain();
        if kept == 0 || !kept.is_multiple_of(self.batch_count) {
            return Err(Error::InvalidMcConfig(format!(
                "batch count {} does not divide the {kept} retained samples per chain",
                self.batch_count
            )));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thinning
    }
}

/// Estimated value with its batch-means standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// Samples that would give the same error if they were independent.
    pub n_effective: f64,
}

impl Estimate {
    /// `|value - exact|` measured in standard errors.
    pub fn z_score(&self, exact: f64) -> f64 {
        (self.value - exact).abs() / self.std_error
    }
}

/// Retained configurations of every chain.
#[derive(Clone, Debug, PartialEq)]
pub struct McRun {
    pub config: McConfig,
    pub n_sites: usize,
    /// `chains[k]` holds the configuration indices retained by chain `k`.
    pub chains: Vec<Vec<u64>>,
    pub acceptance_rate: f64,
}

/// Runs every chain of `config` on `spec`.
pub fn metropolis_run(spec: &LatticeSpec<f64>, config: &McConfig) -> Result<McRun> {
    clamped_run(spec, config, &PartialAssignment::new(), 0)
}

/// Samples the distribution conditioned on `clamp`: clamped spins are fixed
/// and never proposed for a flip. Chain `k` uses stream `stream_base + k`.
pub fn clamped_run(
    spec: &LatticeSpec<f64>,
    config: &McConfig,
    clamp: &PartialAssignment,
    stream_base: u64,
) -> Result<McRun> {
    config.validate()?;
    let n = spec.n_sites();
    if let Some((&site, _)) = clamp.constraints().iter().find(|(&s, _)| s >= n) {
        return Err(Error::InvalidAssignment(format!("site {site} out of range for {n} sites")));
    }
    let free: Vec<usize> = (0..n).filter(|s| !clamp.constraints().contains_key(s)).collect();
    if free.is_empty() {
        return Err(Error::InvalidMcConfig("every site is clamped".into()));
    }
    let results: Vec<(Vec<u64>, u64)> = (0..config.chains)
        .into_par_iter()
        .map(|k| run_chain(spec, config, stream_base + k as u64, clamp, &free))
        .collect();
    let attempts = (config.chains * config.sweeps * free.len()) as f64;
    let accepted: u64 = results.iter().map(|r| r.1).sum();
    Ok(McRun {
        config: *config,
        n_sites: spec.n_sites(),
        chains: results.into_iter().map(|r| r.0).collect(),
        acceptance_rate: accepted as f64 / attempts,
    })
}

fn run_chain(
    spec: &LatticeSpec<f64>,
    config: &McConfig,
    stream: u64,
    clamp: &PartialAssignment,
    free: &[usize],
) -> (Vec<u64>, u64) {
    let n = spec.n_sites();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut state: u64 = rng.random::<u64>() & ((1u64 << n) - 1);
    for (&site, &v) in clamp.constraints() {
        if v > 0 {
            state |= 1 << site;
        } else {
            state &= !(1 << site);
        }
    }
    let beta = spec.beta();
    let mut kept = Vec::with_capacity(config.retained_per_chain());
    let mut accepted = 0u64;
    for sweep in 0..config.sweeps {
        for _ in 0..free.len() {
            let site = free[rng.random_range(0..free.len())];
            let delta = spec.flip_delta(state, site);
            if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                state ^= 1 << site;
                accepted += 1;
            }
        }
        if sweep >= config.burn_in && (sweep - config.burn_in + 1).is_multiple_of(config.thinning) {
            kept.push(state);
        }
    }
    kept.truncate(config.retained_per_chain());
    (kept, accepted)
}

impl McRun {
    fn batches(&self) -> impl Iterator<Item = &[u64]> {
        let size = self.config.retained_per_chain() / self.config.batch_count;
        self.chains.iter().flat_map(move |c| c.chunks(size))
    }

    fn all(&self) -> impl Iterator<Item = u64> + '_ {
        self.chains.iter().flatten().copied()
    }

    pub fn n_samples(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// Fraction of samples matching `eta`.
    pub fn marginal(&self, eta: &PartialAssignment) -> Estimate {
        let matches = |s: u64| eta.constraints().iter().all(|(&site, &v)| spin_at(s, site) == v);
        let indicator = |s: u64| if matches(s) { 1.0 } else { 0.0 };
        self.mean_estimate(indicator)
    }

    /// Mean of `σ_i σ_j`.
    pub fn pair_correlation(&self, i: usize, j: usize) -> Estimate {
        self.mean_estimate(|s| f64::from(spin_at(s, i) * spin_at(s, j)))
    }

    /// `⟨σ_site⟩`.
    pub fn magnetization(&self, site: usize) -> Estimate {
        self.mean_estimate(|s| f64::from(spin_at(s, site)))
    }

    fn mean_estimate(&self, f: impl Fn(u64) -> f64) -> Estimate {
        let n = self.n_samples() as f64;
        let value = self.all().map(&f).sum::<f64>() / n;
        let var = self.all().map(|s| (f(s) - value).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let means: Vec<f64> = self.batches().map(|b| b.iter().map(|&s| f(s)).sum::<f64>() / b.len() as f64).collect();
        finish(value, &means, var / n, n)
    }

    /// Post-selected `⟨σ1 σ2⟩` on the subensemble with `σ_a = a`, `σ_b = b`,
    /// as a ratio of counts.
    pub fn correlator(&self, roles: &RoleAssignment, a: i8, b: i8) -> Estimate {
        let (value, n, var) = subensemble(self.all(), roles, a, b);
        let per_batch: Vec<f64> =
            self.batches().map(|batch| subensemble(batch.iter().copied(), roles, a, b).0).collect();
        finish(value, &per_batch, var / n, n)
    }

    /// CHSH combination with its batch-means error, using the placement
    /// selected by `convention` on the pooled correlators.
    pub fn chsh(&self, roles: &RoleAssignment, convention: SignConvention) -> (Estimate, Correlators<Estimate>) {
        let m = Correlators::from_fn(|a, b| self.correlator(roles, a, b));
        let pooled = Correlators::from_fn(|a, b| m.get(a, b).value);
        let (value, placement) = convention.combine(&pooled);
        let per_batch: Vec<f64> = self
            .batches()
            .map(|batch| {
                let mb = Correlators::from_fn(|a, b| subensemble(batch.iter().copied(), roles, a, b).0);
                placement.combine(&mb).0
            })
            .collect();
        let naive_var: f64 = SETTING_PAIRS
            .iter()
            .map(|&(a, b)| {
                let (_, n, var) = subensemble(self.all(), roles, a, b);
                var / n
            })
            .sum();
        (finish(value, &per_batch, naive_var, self.n_samples() as f64), m)
    }
}

/// CHSH value from four clamped runs, one per setting pair. Pair `p` (in
/// [`SETTING_PAIRS`] order) uses streams starting at `(p + 1) * chains`.
/// The batch-means error treats the four runs as independent.
pub fn conditional_chsh(
    spec: &LatticeSpec<f64>,
    config: &McConfig,
    convention: SignConvention,
) -> Result<(Estimate, Correlators<Estimate>)> {
    let roles = spec.require_roles()?;
    let mut runs = Vec::with_capacity(4);
    for (p, &(a, b)) in SETTING_PAIRS.iter().enumerate() {
        let clamp = PartialAssignment::from_pairs(&[(roles.setting_a, a), (roles.setting_b, b)])?;
        runs.push(clamped_run(spec, config, &clamp, (p as u64 + 1) * config.chains as u64)?);
    }
    let m = Correlators::from_fn(|a, b| {
        let p = SETTING_PAIRS.iter().position(|&s| s == (a, b)).expect("setting pair");
        runs[p].pair_correlation(roles.outcome1, roles.outcome2)
    });
    let pooled = Correlators::from_fn(|a, b| m.get(a, b).value);
    let (value, placement) = convention.combine(&pooled);
    let product = |s: u64| f64::from(spin_at(s, roles.outcome1) * spin_at(s, roles.outcome2));
    let batch_means: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.batches().map(|b| b.iter().map(|&s| product(s)).sum::<f64>() / b.len() as f64).collect())
        .collect();
    let per_batch: Vec<f64> = (0..batch_means[0].len())
        .map(|k| {
            let mb = Correlators::from_fn(|a, b| {
                let p = SETTING_PAIRS.iter().position(|&s| s == (a, b)).expect("setting pair");
                batch_means[p][k]
            });
            placement.combine(&mb).0
        })
        .collect();
    let n = runs[0].n_samples() as f64;
    let naive_var: f64 = SETTING_PAIRS.iter().map(|&(a, b)| (1.0 - m.get(a, b).value.powi(2)) / n).sum();
    Ok((finish(value, &per_batch, naive_var, n), m))
}

/// `(mean, count, variance)` of σ1σ2 on one post-selected subensemble.
fn subensemble(samples: impl Iterator<Item = u64>, roles: &RoleAssignment, a: i8, b: i8) -> (f64, f64, f64) {
    let mut count = 0.0;
    let mut sum = 0.0;
    for s in samples {
        if spin_at(s, roles.setting_a) == a && spin_at(s, roles.setting_b) == b {
            count += 1.0;
            sum += f64::from(spin_at(s, roles.outcome1) * spin_at(s, roles.outcome2));
        }
    }
    let mean = sum / count;
    // σ1σ2 is ±1, so the sample variance follows from the mean
    let var = if count > 1.0 { (1.0 - mean * mean) * count / (count - 1.0) } else { f64::NAN };
    (mean, count, var)
}

fn finish(value: f64, batch_values: &[f64], naive_var: f64, n: f64) -> Estimate {
    let b = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / b;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    let std_error = (var / b).sqrt();
    let n_effective = if std_error > 0.0 { n * naive_var / (std_error * std_error) } else { n };
    Estimate { value, std_error, n_effective }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fig1_default;
    use crate::lattice::Edge;

    fn small() -> McConfig {
        McConfig { seed: 7, sweeps: 21_000, burn_in: 1_000, thinning: 2, batch_count: 20, chains: 2 }
    }

    #[test]
    fn config_validation() {
        assert!(McConfig::default().validate().is_ok());
        assert!(McConfig { sweeps: 10, burn_in: 10, ..small() }.validate().is_err());
        assert!(McConfig { batch_count: 7, ..small() }.validate().is_err());
        assert!(McConfig { thinning: 0, ..small() }.validate().is_err());
        assert!(McConfig { chains: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn free_spins_in_field() {
        let spec = fig1_default::<f64>(0.0, 1.0);
        let run = metropolis_run(&spec, &small()).unwrap();
        assert_eq!(run.n_samples(), 20_000);
        for site in 0..10 {
            let m = run.magnetization(site);
            assert!(m.z_score(1f64.tanh()) < 3.0, "site {site}: {m:?}");
            assert!(m.n_effective > 0.0);
        }
    }

    #[test]
    fn near_infinite_temperature() {
        let spec = fig1_default::<f64>(1.0, 1.0).with_beta(1e-12).unwrap();
        let run = metropolis_run(&spec, &small()).unwrap();
        assert!(run.acceptance_rate > 0.999);
        for site in 0..10 {
            let p = run.marginal(&PartialAssignment::from_pairs(&[(site, 1)]).unwrap());
            assert!(p.z_score(0.5) < 3.0);
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let spec = fig1_default::<f64>(1.4, 1.0);
        let cfg = McConfig { sweeps: 3_000, burn_in: 1_000, ..small() };
        let a = metropolis_run(&spec, &cfg).unwrap();
        let b = metropolis_run(&spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = metropolis_run(&spec, &McConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.chains, c.chains);
        assert_ne!(a.chains[0], a.chains[1]);
    }

    #[test]
    fn clamped_sites_never_move() {
        let spec = fig1_default::<f64>(1.4, 1.0);
        let clamp = PartialAssignment::from_pairs(&[(6, -1), (8, -1)]).unwrap();
        let run = clamped_run(&spec, &small(), &clamp, 0).unwrap();
        assert!(run.chains.iter().flatten().all(|&s| spin_at(s, 6) == -1 && spin_at(s, 8) == -1));
        let all = PartialAssignment::from_pairs(&(0..10).map(|s| (s, 1)).collect::<Vec<_>>()).unwrap();
        assert!(clamped_run(&spec, &small(), &all, 0).is_err());
    }

    #[test]
    fn conditional_chsh_matches_exact() {
        let spec = fig1_default::<f64>(1.4, 1.0);
        let exact = crate::gibbs::build_distribution(&spec, 24).unwrap();
        let roles = spec.roles().unwrap();
        let want = crate::chsh::chsh(&exact, roles, SignConvention::default()).unwrap();
        let (x, m) = conditional_chsh(&spec, &small(), SignConvention::default()).unwrap();
        for (a, b) in SETTING_PAIRS {
            assert!(m.get(a, b).z_score(want.m.get(a, b)) < 4.0);
        }
        assert!(x.z_score(want.x_bi) < 4.0, "{x:?} vs {}", want.x_bi);
    }

    #[test]
    fn frequencies_match_exact_probabilities() {
        let spec = LatticeSpec::new(
            4,
            vec![Edge::new(0, 1, 0.8), Edge::new(1, 2, -0.5), Edge::new(2, 3, 1.1), Edge::new(3, 0, 0.3)],
            vec![0.2, -0.4, 0.0, 0.7],
            1.0,
        )
        .unwrap();
        let exact = crate::gibbs::build_distribution(&spec, 24).unwrap();
        let run = metropolis_run(&spec, &small()).unwrap();
        for idx in 0..16u64 {
            let values: Vec<(usize, i8)> = (0..4).map(|s| (s, spin_at(idx, s))).collect();
            let est = run.marginal(&PartialAssignment::from_pairs(&values).unwrap());
            assert!(est.z_score(exact.prob(idx)) < 5.0, "{idx}: {est:?} vs {}", exact.prob(idx));
        }
    }
}
