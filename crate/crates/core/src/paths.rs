//! Distributions of the number of multipath components beyond the chip
//! boundary: per cluster, over several clusters, and given the cluster count.

use serde::{Deserialize, Serialize};

use crate::cluster::{prob_chip_cluster_index, ChipTime};
use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, ln_binomial, ln_poisson_pmf, poisson_cdf};
use crate::params::{ChannelParams, EnvClass};

/// Enumeration stops once this much mass is covered.
pub const PMF_MASS_TARGET: f64 = 1.0 - 1e-8;
pub const PMF_MAX_N: u64 = 5000;

/// Probability mass function on `n_min, n_min + 1, …` with explicit
/// truncation accounting.
///
/// `tail_mass` is probability beyond the enumerated support; `excluded_mass`
/// is probability that deliberately belongs to another mixture component
/// (the NLOS leg where the chip ends before the first cluster).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    pub n_min: u64,
    pub probs: Vec<f64>,
    pub tail_mass: f64,
    #[serde(default)]
    pub excluded_mass: f64,
}

impl DiscretePmf {
    /// Build from enumerated probabilities; the tail is whatever is missing.
    pub fn from_probs(n_min: u64, probs: Vec<f64>, excluded_mass: f64) -> Self {
        let covered = kahan_sum(probs.iter().copied()) + excluded_mass;
        DiscretePmf { n_min, probs, tail_mass: (1.0 - covered).max(0.0), excluded_mass }
    }

    /// Empirical pmf of a set of counts.
    pub fn from_counts(counts: &[u64]) -> Self {
        if counts.is_empty() {
            return DiscretePmf { n_min: 0, probs: Vec::new(), tail_mass: 1.0, excluded_mass: 0.0 };
        }
        let max = *counts.iter().max().expect("non-empty");
        let mut hist = vec![0u64; max as usize + 1];
        for &c in counts {
            hist[c as usize] += 1;
        }
        let total = counts.len() as f64;
        DiscretePmf {
            n_min: 0,
            probs: hist.into_iter().map(|h| h as f64 / total).collect(),
            tail_mass: 0.0,
            excluded_mass: 0.0,
        }
    }

    pub fn prob(&self, n: u64) -> f64 {
        if n < self.n_min {
            return 0.0;
        }
        self.probs.get((n - self.n_min) as usize).copied().unwrap_or(0.0)
    }

    /// Largest enumerated value.
    pub fn n_max(&self) -> u64 {
        self.n_min + self.probs.len().saturating_sub(1) as u64
    }

    pub fn enumerated_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.probs.iter().enumerate().map(|(i, p)| (self.n_min + i as u64) as f64 * p))
    }

    pub fn second_moment(&self) -> f64 {
        kahan_sum(self.probs.iter().enumerate().map(|(i, p)| {
            let n = (self.n_min + i as u64) as f64;
            n * n * p
        }))
    }

    pub fn cdf(&self, n: u64) -> f64 {
        if n < self.n_min {
            return 0.0;
        }
        let upto = ((n - self.n_min) as usize + 1).min(self.probs.len());
        kahan_sum(self.probs[..upto].iter().copied())
    }

    /// Half the L1 distance over the union of both supports. Unenumerated
    /// and excluded mass of either side is counted as disjoint, so the
    /// result is an upper bound when either is nonzero.
    pub fn tv_distance(&self, other: &DiscretePmf) -> f64 {
        let lo = self.n_min.min(other.n_min);
        let hi = self.n_max().max(other.n_max());
        let l1 = kahan_sum((lo..=hi).map(|n| (self.prob(n) - other.prob(n)).abs()));
        let unplaced = self.tail_mass + self.excluded_mass + other.tail_mass + other.excluded_mass;
        (0.5 * (l1 + unplaced)).min(1.0)
    }

    /// Check non-negativity, total mass and the truncation bound.
    pub fn check(&self, tail_tol: f64) -> Result<()> {
        if let Some(p) = self.probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::Validation(format!("negative or NaN probability {p}")));
        }
        let total = self.enumerated_mass() + self.tail_mass + self.excluded_mass;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("pmf mass {total} differs from 1")));
        }
        if self.tail_mass >= tail_tol {
            return Err(Error::Validation(format!("tail mass {} not below {tail_tol}", self.tail_mass)));
        }
        Ok(())
    }
}

fn ray_odds(params: &ChannelParams) -> (f64, f64) {
    let lam = params.ray_rate_fitted;
    let cl = params.cluster_rate;
    (lam / (lam + cl), cl / (lam + cl))
}

/// Probability of `n` rays after the cluster's first ray within one
/// exponentially distributed cluster gap: `λ^n Λ / (λ + Λ)^{n+1}`.
pub fn prob_paths_in_cluster(n: u64, params: &ChannelParams) -> f64 {
    let (q, s) = ray_odds(params);
    (n as f64 * q.ln() + s.ln()).exp()
}

/// Law of the total count over `r + 1` independent clusters (negative binomial).
pub fn prob_paths_over_clusters(r: u64, n: u64, params: &ChannelParams) -> f64 {
    let (q, s) = ray_odds(params);
    (n as f64 * q.ln() + (r + 1) as f64 * s.ln() + ln_binomial(n + r, r)).exp()
}

/// Count of interfering paths when the chip boundary lies in cluster `k`
/// (0-based) of `L`, each of the `L - k` interfering clusters holding at
/// least one path. Zero below the support `n < L - k`.
pub fn prob_paths_given_k_l(n: u64, k: u64, clusters: u64, params: &ChannelParams) -> Result<f64> {
    if clusters == 0 || k >= clusters {
        return Err(Error::Domain(format!("cluster index {k} outside 0..{clusters}")));
    }
    let m = clusters - k;
    if n < m {
        return Ok(0.0);
    }
    let (q, s) = ray_odds(params);
    Ok(((n - m) as f64 * q.ln() + m as f64 * s.ln() + ln_binomial(n - 1, m - 1)).exp())
}

/// Mass of the cluster-index law (LOS or NLOS form) carried by `k ≥ 0`.
fn index_law_mass(tc: ChipTime, env: EnvClass, params: &ChannelParams) -> f64 {
    match env {
        EnvClass::Los => 1.0,
        EnvClass::Nlos => -(-params.cluster_rate * tc.ns()).exp_m1(),
    }
}

/// Probability of zero interfering paths given `L` clusters: the chip
/// boundary lies beyond the last cluster.
pub fn prob_zero_paths(clusters: u64, tc: ChipTime, env: EnvClass, params: &ChannelParams) -> f64 {
    let mu = params.cluster_rate * tc.ns();
    let head = match env {
        EnvClass::Los => poisson_cdf(clusters.saturating_sub(1), mu),
        EnvClass::Nlos => kahan_sum((1..=clusters).map(|j| ln_poisson_pmf(j, mu).exp())),
    };
    if clusters == 0 {
        return index_law_mass(tc, env, params);
    }
    (index_law_mass(tc, env, params) - head).max(0.0)
}

/// Probability of `n` interfering paths given `L` clusters. `n = 0` is the
/// discrete mass of [`prob_zero_paths`].
pub fn prob_paths_given_l(n: u64, clusters: u64, tc: ChipTime, env: EnvClass, params: &ChannelParams) -> Result<f64> {
    if clusters == 0 {
        return Err(Error::Domain("cluster count must be at least 1".into()));
    }
    if n == 0 {
        return Ok(prob_zero_paths(clusters, tc, env, params));
    }
    let mut terms = Vec::with_capacity(clusters as usize);
    for k in 0..clusters {
        let pk = prob_chip_cluster_index(k, tc, env, params);
        terms.push(prob_paths_given_k_l(n, k, clusters, params)? * pk);
    }
    Ok(kahan_sum(terms))
}

/// Full pmf of the interfering-path count given `L` clusters, `n ≥ 0`.
/// For NLOS the leg where the chip ends before the first cluster is carried
/// as `excluded_mass`.
pub fn path_count_pmf(clusters: u64, tc: ChipTime, env: EnvClass, params: &ChannelParams) -> Result<DiscretePmf> {
    let excluded = 1.0 - index_law_mass(tc, env, params);
    let mut probs = vec![prob_paths_given_l(0, clusters, tc, env, params)?];
    let mut covered = probs[0] + excluded;
    let mut n = 1;
    while covered < PMF_MASS_TARGET && n <= PMF_MAX_N {
        let p = prob_paths_given_l(n, clusters, tc, env, params)?;
        probs.push(p);
        covered += p;
        n += 1;
    }
    Ok(DiscretePmf::from_probs(0, probs, excluded))
}

/// Poisson cluster-count law conditioned on at least one cluster,
/// enumerated until the remaining tail is below `1e-8`.
pub fn cluster_count_pmf(params: &ChannelParams) -> DiscretePmf {
    let mean = params.mean_clusters;
    let norm = -(-mean).exp_m1();
    let mut probs = Vec::new();
    let mut covered = 0.0;
    let mut l = 1u64;
    while covered < PMF_MASS_TARGET && l <= PMF_MAX_N {
        let p = ln_poisson_pmf(l, mean).exp() / norm;
        probs.push(p);
        covered += p;
        l += 1;
    }
    DiscretePmf::from_probs(1, probs, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::reference_params;
    use approx::assert_relative_eq;

    fn cm1() -> ChannelParams {
        reference_params("cm1").unwrap()
    }

    fn tc(ns: f64) -> ChipTime {
        ChipTime::new(ns).unwrap()
    }

    #[test]
    fn symmetric_rates_give_geometric_half() {
        let mut p = cm1();
        p.ray_rate_fitted = p.cluster_rate;
        for n in 0..30u64 {
            assert_relative_eq!(prob_paths_in_cluster(n, &p), 0.5f64.powi(n as i32 + 1), max_relative = 1e-13);
        }
    }

    #[test]
    fn single_cluster_law_sums_to_one() {
        let p = cm1();
        let total = kahan_sum((0..2000).map(|n| prob_paths_in_cluster(n, &p)));
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn r_zero_reduces_to_single_cluster() {
        let p = cm1();
        for n in 0..50 {
            assert_relative_eq!(prob_paths_over_clusters(0, n, &p), prob_paths_in_cluster(n, &p), max_relative = 1e-12);
        }
    }

    #[test]
    fn over_cluster_law_normalizes_and_has_negative_binomial_mean() {
        let p = cm1();
        let ratio = p.ray_rate_fitted / p.cluster_rate;
        for r in 0..=10u64 {
            let probs: Vec<f64> = (0..3000).map(|n| prob_paths_over_clusters(r, n, &p)).collect();
            assert!((kahan_sum(probs.iter().copied()) - 1.0).abs() < 1e-9);
            let mean = kahan_sum(probs.iter().enumerate().map(|(n, q)| n as f64 * q));
            assert!((mean - (r + 1) as f64 * ratio).abs() < 1e-8, "r={r} mean={mean}");
        }
    }

    #[test]
    fn large_counts_do_not_overflow() {
        let p = cm1();
        let v = prob_paths_over_clusters(50, 400, &p);
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn last_cluster_only_is_shifted_geometric() {
        let p = cm1();
        let l = 4;
        for n in 1..40u64 {
            let lhs = prob_paths_given_k_l(n, l - 1, l, &p).unwrap();
            assert_relative_eq!(lhs, prob_paths_in_cluster(n - 1, &p), max_relative = 1e-12);
        }
    }

    #[test]
    fn conditional_on_k_normalizes_on_shifted_support() {
        let p = cm1();
        for (k, l) in [(0u64, 1u64), (2, 4), (0, 10), (5, 9)] {
            assert_eq!(prob_paths_given_k_l(l - k - 1, k, l, &p).unwrap(), 0.0);
            let total = kahan_sum((l - k..4000).map(|n| prob_paths_given_k_l(n, k, l, &p).unwrap()));
            assert!((total - 1.0).abs() < 1e-9, "k={k} L={l}: {total}");
        }
        assert!(prob_paths_given_k_l(3, 4, 4, &p).is_err());
    }

    #[test]
    fn single_cluster_sum_is_one_term() {
        let p = cm1();
        let c = tc(30.0);
        for n in 1..20 {
            let expected = prob_paths_given_k_l(n, 0, 1, &p).unwrap() * prob_chip_cluster_index(0, c, EnvClass::Los, &p);
            assert_relative_eq!(prob_paths_given_l(n, 1, c, EnvClass::Los, &p).unwrap(), expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn zero_path_mass_for_one_los_cluster() {
        let p = cm1();
        let c = tc(50.0);
        assert_relative_eq!(
            prob_zero_paths(1, c, EnvClass::Los, &p),
            1.0 - (-p.cluster_rate * 50.0).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_path_mass_decreases_with_cluster_count() {
        let p = cm1();
        for env in [EnvClass::Los, EnvClass::Nlos] {
            let z: Vec<f64> = (1..15).map(|l| prob_zero_paths(l, tc(50.0), env, &p)).collect();
            assert!(z.windows(2).all(|w| w[1] <= w[0]), "{env}: {z:?}");
        }
    }

    #[test]
    fn total_probability_given_l() {
        for (id, env) in [("cm1", EnvClass::Los), ("cm2", EnvClass::Nlos)] {
            let p = reference_params(id).unwrap();
            for l in [1u64, 3, 5, 10] {
                for t in [10.0, 50.0, 100.0] {
                    let pmf = path_count_pmf(l, tc(t), env, &p).unwrap();
                    let leg = if env == EnvClass::Nlos { (-p.first_cluster_rate * t).exp() } else { 0.0 };
                    let total = pmf.enumerated_mass() + leg;
                    assert!((total - 1.0).abs() < 1e-8, "{id} L={l} tc={t}: {total}");
                    pmf.check(1e-8).unwrap();
                }
            }
        }
    }

    #[test]
    fn path_count_stochastically_increases_with_clusters() {
        let p = cm1();
        let pmfs: Vec<DiscretePmf> = (1..=10).map(|l| path_count_pmf(l, tc(50.0), EnvClass::Los, &p).unwrap()).collect();
        for w in pmfs.windows(2) {
            // beyond the enumerated support the cdf is short by the truncated tail
            for n in 0..w[0].n_max().min(w[1].n_max()) {
                assert!(w[1].cdf(n) <= w[0].cdf(n) + 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn cluster_count_law_is_conditioned_and_truncated() {
        let p = cm1();
        let pmf = cluster_count_pmf(&p);
        assert_eq!(pmf.n_min, 1);
        pmf.check(1e-8).unwrap();
        let norm = 1.0 - (-3f64).exp();
        assert_relative_eq!(pmf.prob(1), 3.0 * (-3f64).exp() / norm, max_relative = 1e-12);
    }

    #[test]
    fn tv_distance_basics() {
        let a = DiscretePmf::from_probs(0, vec![0.5, 0.5], 0.0);
        let b = DiscretePmf::from_probs(1, vec![0.5, 0.5], 0.0);
        assert_relative_eq!(a.tv_distance(&b), 0.5);
        assert_eq!(a.tv_distance(&a), 0.0);
        let e = DiscretePmf::from_counts(&[0, 1, 1, 3]);
        assert_relative_eq!(e.prob(1), 0.5);
        assert_relative_eq!(e.mean(), 1.25);
    }
}
