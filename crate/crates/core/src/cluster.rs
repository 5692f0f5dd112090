//! Cluster arrival statistics and the probability that the chip boundary
//! falls inside a given cluster.
//!
//! Cluster `ℓ` (for `ℓ ≥ 1`) is the interval `[T_{ℓ-1}, T_ℓ)` where
//! `T_ℓ = T_0 + ΔT_1 + … + ΔT_ℓ`, `T_0 ~ Exp(Λ0)` and the gaps are `Exp(Λ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, ln_factorial, ln_poisson_pmf, log_sum_exp, poisson_sf};
use crate::params::{ChannelParams, EnvClass};

/// Relative rate separation below which `Λ0 = Λ` is treated as exact.
pub const DEGENERATE_RATE_TOL: f64 = 1e-9;
/// Enumeration of cluster probabilities stops once this much mass is covered.
pub const CLUSTER_SERIES_MASS: f64 = 1.0 - 1e-9;
pub const CLUSTER_SERIES_MAX: u32 = 500;

/// Chip duration in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChipTime(f64);

impl ChipTime {
    /// Zero is admitted as the limit of an arbitrarily short chip.
    pub fn new(ns: f64) -> Result<Self> {
        if ns.is_finite() && ns >= 0.0 {
            Ok(ChipTime(ns))
        } else {
            Err(Error::Validation(format!("chip time must be finite and non-negative, got {ns}")))
        }
    }

    pub fn ns(self) -> f64 {
        self.0
    }
}

/// `ln|R_n(u)|` and the sign of `R_n(u) = e^u - Σ_{i≤n} u^i/i!`.
/// Returns `(-inf, 0)` when the remainder is exactly zero.
pub(crate) fn ln_abs_taylor_remainder(order: u32, u: f64) -> (f64, i8) {
    if u == 0.0 {
        return (f64::NEG_INFINITY, 0);
    }
    let n = order as f64;
    if u > n + 1.0 {
        // R = e^u P(Poisson(u) > n); the tail probability is summed term by term
        return (u + poisson_sf(order as u64, u).ln(), 1);
    }
    if u >= -(n + 1.0) {
        // Tail series from i = n+1, scaled by its first term so every term is ≤ 1.
        let ln_first = (n + 1.0) * u.abs().ln() - ln_factorial(order as u64 + 1);
        let first_sign: i8 = if u < 0.0 && (order + 1) % 2 == 1 { -1 } else { 1 };
        let mut sum = 1.0f64;
        let mut comp = 0.0f64;
        let mut term = 1.0f64;
        let mut i = n + 2.0;
        loop {
            term *= u / i;
            let t = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
            sum = t;
            if term.abs() < 1e-30 * (sum + comp).abs() {
                break;
            }
            i += 1.0;
        }
        let scaled = sum + comp;
        let sign = if scaled < 0.0 { -first_sign } else { first_sign };
        return (ln_first + scaled.abs().ln(), sign);
    }
    // u < -(n+1): the partial sum is dominated by its last term; e^u is tiny.
    let ln_last = n * u.abs().ln() - ln_factorial(order as u64);
    let last_sign = if order % 2 == 1 { -1.0 } else { 1.0 };
    let mut weights = Vec::with_capacity(order as usize + 1);
    let mut w = last_sign;
    weights.push(w);
    for i in (1..=order).rev() {
        w *= i as f64 / u;
        weights.push(w);
    }
    let partial = kahan_sum(weights);
    let diff = (u - ln_last).exp() - partial;
    let sign = if diff < 0.0 { -1 } else { 1 };
    (ln_last + diff.abs().ln(), sign)
}

/// Remainder of the order-`order` Taylor expansion of `e^u` about zero.
pub fn taylor_remainder(order: u32, u: f64) -> f64 {
    let (ln_abs, sign) = ln_abs_taylor_remainder(order, u);
    sign as f64 * ln_abs.exp()
}

fn degenerate(params: &ChannelParams) -> bool {
    (params.cluster_rate - params.first_cluster_rate).abs() / params.cluster_rate < DEGENERATE_RATE_TOL
}

/// `P(T_{ℓ-1} ≤ z < T_ℓ)` in log form; shared by the arrival density
/// (`f_ℓ(z) = Λ · P(T_{ℓ-1} ≤ z < T_ℓ)`).
fn ln_cluster_hit(ell: u32, z: f64, params: &ChannelParams) -> f64 {
    let a = params.first_cluster_rate;
    let b = params.cluster_rate;
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if degenerate(params) {
        // T_{ℓ-1} ~ Erlang(ℓ, Λ): the hit event is "exactly ℓ arrivals in [0, z]"
        return ln_poisson_pmf(ell as u64, b * z);
    }
    let order = ell - 1;
    let d = b - a;
    let (ln_r, sign_r) = ln_abs_taylor_remainder(order, d * z);
    if sign_r == 0 {
        return f64::NEG_INFINITY;
    }
    let ln_pref = a.ln() + order as f64 * b.ln() - ell as f64 * d.abs().ln();
    let sign_pref: i8 = if d < 0.0 && ell % 2 == 1 { -1 } else { 1 };
    debug_assert!(sign_pref * sign_r > 0, "cluster probability must be non-negative");
    ln_pref - b * z + ln_r
}

/// Density of the arrival time `T_ℓ` of cluster `ℓ` (1/ns). `ℓ = 0` is the
/// first-cluster law `Exp(Λ0)`; for `Λ0 = Λ` the Erlang limit is used.
pub fn cluster_arrival_pdf(ell: u32, x: f64, params: &ChannelParams) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let a = params.first_cluster_rate;
    let b = params.cluster_rate;
    if ell == 0 {
        return a * (-a * x).exp();
    }
    b * ln_cluster_hit(ell, x, params).exp()
}

/// Probability that the chip boundary falls into cluster `ℓ ≥ 1`, i.e.
/// `T_{ℓ-1} ≤ T_c < T_ℓ`.
pub fn prob_chip_in_cluster(ell: u32, tc: ChipTime, params: &ChannelParams) -> Result<f64> {
    if ell == 0 {
        return Err(Error::Domain("cluster index must be at least 1".into()));
    }
    Ok(ln_cluster_hit(ell, tc.ns(), params).exp().clamp(0.0, 1.0))
}

/// Probability that the chip ends before the first cluster arrives, in
/// which case all received power interferes.
pub fn prob_chip_before_first_cluster(tc: ChipTime, params: &ChannelParams) -> f64 {
    (-params.first_cluster_rate * tc.ns()).exp()
}

/// Probability that the chip boundary lies in the cluster with 0-based index
/// `k` under the analytic chain's conventions: Poisson for LOS (`T_0 = 0`),
/// shifted Poisson for NLOS. The NLOS law sums to `1 - e^{-ΛT_c}`.
pub fn prob_chip_cluster_index(k: u64, tc: ChipTime, env: EnvClass, params: &ChannelParams) -> f64 {
    let mu = params.cluster_rate * tc.ns();
    match env {
        EnvClass::Los => ln_poisson_pmf(k, mu).exp(),
        EnvClass::Nlos => ln_poisson_pmf(k + 1, mu).exp(),
    }
}

/// Truncated series of [`prob_chip_in_cluster`] over `ℓ = 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMembership {
    /// `probs[i]` is the probability for cluster `ℓ = i + 1`.
    pub probs: Vec<f64>,
    pub before_first: f64,
    /// Mass not enumerated.
    pub tail_mass: f64,
}

pub fn cluster_membership(tc: ChipTime, params: &ChannelParams) -> Result<ClusterMembership> {
    let before_first = prob_chip_before_first_cluster(tc, params);
    let mut probs = Vec::new();
    let mut total = before_first;
    for ell in 1..=CLUSTER_SERIES_MAX {
        let p = prob_chip_in_cluster(ell, tc, params)?;
        probs.push(p);
        total += p;
        if total > CLUSTER_SERIES_MASS {
            break;
        }
    }
    Ok(ClusterMembership { probs, before_first, tail_mass: (1.0 - total).max(0.0) })
}

fn ln_j_scale(m: u32, rate: f64) -> f64 {
    ln_factorial(m as u64) - (m as f64 + 1.0) * rate.ln()
}

/// `ln J_{m,Λ}(T_c)` with `J = ∫_{T_c}^∞ x^m e^{-Λx} dx`.
pub fn ln_j_integral(m: u32, rate: f64, tc: ChipTime) -> f64 {
    let mu = rate * tc.ns();
    let terms: Vec<f64> = (0..=m as u64).map(|p| ln_poisson_pmf(p, mu)).collect();
    ln_j_scale(m, rate) + log_sum_exp(&terms).min(0.0)
}

/// `J_{m,Λ}(T_c) = e^{-ΛT_c}/Λ^{m+1} Σ_{p≤m} m! (ΛT_c)^p / p!`.
pub fn j_integral(m: u32, rate: f64, tc: ChipTime) -> f64 {
    ln_j_integral(m, rate, tc).exp()
}

/// `J̄_{m,Λ}(T_c) = ∫_0^{T_c} x^m e^{-Λx} dx = m!/Λ^{m+1} - J`, evaluated
/// through the Poisson upper tail so small `T_c` does not cancel.
pub fn j_bar_integral(m: u32, rate: f64, tc: ChipTime) -> f64 {
    ln_j_scale(m, rate).exp() * poisson_sf(m as u64, rate * tc.ns())
}
