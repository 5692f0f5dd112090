//! Monte-Carlo Saleh-Valenzuela channel generator used as ground truth for
//! the analytic chain.
//!
//! Two fidelity levels are offered. [`OracleMode::Simplified`] reproduces
//! exactly the assumptions of the analytic model: one exponential PDP,
//! single-Poisson rays that stop at the next cluster start, and a fixed
//! m-factor. [`OracleMode::Full`] follows the 802.15.4a generator: mixed
//! Poisson rays, per-cluster decay constants and shadowing, lognormal
//! m-factors, and rays that run until the cluster's PDP has decayed by 50 dB.
//!
//! Every realization draws from its own ChaCha stream keyed by
//! `(seed, index)`, so results do not depend on thread scheduling.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ChipTime;
use crate::error::{Error, Result};
use crate::numeric::kahan_sum;
use crate::params::{ChannelParams, EnvClass};
use crate::paths::DiscretePmf;

/// Full-fidelity rays stop once the intra-cluster PDP is this far below its peak.
pub const RAY_PDP_FLOOR: f64 = 1e-5;
/// Smallest Nakagami m-factor the fading law admits.
pub const MIN_NAKAGAMI_M: f64 = 0.5;
/// Rejection sampling gives up below this acceptance rate.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-4;
const REJECTION_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// The analytic model's own assumptions.
    #[default]
    Simplified,
    /// 802.15.4a-style generation; needs the oracle extras.
    Full,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMode::Simplified => write!(f, "simplified"),
            OracleMode::Full => write!(f, "full"),
        }
    }
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simplified" => Ok(OracleMode::Simplified),
            "full" => Ok(OracleMode::Full),
            other => Err(Error::Validation(format!("unknown oracle mode `{other}`"))),
        }
    }
}

/// One sampled channel impulse response, normalized to unit energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Cluster arrival times `T_l`, ns.
    pub cluster_times: Vec<f64>,
    /// Arrival time of the cluster that would follow the last one; bounds
    /// the last cluster's rays in simplified mode.
    pub horizon: f64,
    /// Ray delays relative to their cluster start; the first is always 0.
    pub ray_delays: Vec<Vec<f64>>,
    /// Mean ray power from the PDP, before fading and normalization.
    pub mean_powers: Vec<Vec<f64>>,
    /// Ray amplitudes after normalization.
    pub tap_gains: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
}

impl ChannelRealization {
    pub fn cluster_count(&self) -> usize {
        self.cluster_times.len()
    }

    /// Start of the cluster after cluster `l` (0-based).
    pub fn cluster_end(&self, l: usize) -> f64 {
        self.cluster_times.get(l + 1).copied().unwrap_or(self.horizon)
    }

    /// Every ray as `(absolute delay, amplitude, mean power)`.
    pub fn rays(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.cluster_times.iter().enumerate().flat_map(move |(l, t)| {
            self.ray_delays[l]
                .iter()
                .zip(&self.tap_gains[l])
                .zip(&self.mean_powers[l])
                .map(move |((tau, a), w)| (t + tau, *a, *w))
        })
    }

    pub fn ray_count(&self) -> usize {
        self.ray_delays.iter().map(Vec::len).sum()
    }

    pub fn total_energy(&self) -> f64 {
        kahan_sum(self.tap_gains.iter().flatten().map(|a| a * a))
    }

    /// Number of rays arriving at or after `tc`.
    pub fn paths_beyond(&self, tc: ChipTime) -> u64 {
        self.rays().filter(|(d, _, _)| *d >= tc.ns()).count() as u64
    }
}

/// Fresh generator for realization `index` of the experiment keyed by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn exp(rate: f64) -> Exp<f64> {
    Exp::new(rate).expect("rates are validated positive")
}

/// Cluster count `L ~ Poisson(L̄)` conditioned on `L ≥ 1`.
pub fn draw_cluster_count<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> u32 {
    let poisson = Poisson::new(params.mean_clusters).expect("mean cluster count is validated positive");
    loop {
        let l: f64 = poisson.sample(rng);
        if l >= 1.0 {
            return l as u32;
        }
    }
}

/// Draw a realization with the Poisson cluster count.
pub fn generate_realization<R: Rng + ?Sized>(
    params: &ChannelParams,
    mode: OracleMode,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let clusters = draw_cluster_count(params, rng);
    generate_with_clusters(params, mode, clusters, rng)
}

/// Draw a realization with exactly `clusters` clusters.
pub fn generate_with_clusters<R: Rng + ?Sized>(
    params: &ChannelParams,
    mode: OracleMode,
    clusters: u32,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if clusters == 0 {
        return Err(Error::Domain("a realization needs at least one cluster".into()));
    }
    if mode == OracleMode::Full && params.oracle_extras.is_none() {
        return Err(Error::Validation(format!(
            "full-fidelity mode needs the oracle_* keys, absent for {}",
            params.id
        )));
    }
    let gap = exp(params.cluster_rate);
    let first = match params.env {
        EnvClass::Los => 0.0,
        EnvClass::Nlos => exp(params.first_cluster_rate).sample(rng),
    };
    let mut cluster_times = Vec::with_capacity(clusters as usize);
    let mut t = first;
    for _ in 0..clusters {
        cluster_times.push(t);
        t += gap.sample(rng);
    }
    let horizon = t;

    let mut real = ChannelRealization {
        cluster_times,
        horizon,
        ray_delays: Vec::with_capacity(clusters as usize),
        mean_powers: Vec::with_capacity(clusters as usize),
        tap_gains: Vec::with_capacity(clusters as usize),
        phases: Vec::with_capacity(clusters as usize),
    };
    match mode {
        OracleMode::Simplified => fill_simplified(&mut real, params, rng),
        OracleMode::Full => fill_full(&mut real, params, rng),
    }
    normalize(&mut real);
    Ok(real)
}

fn fill_simplified<R: Rng + ?Sized>(real: &mut ChannelRealization, params: &ChannelParams, rng: &mut R) {
    let ray_gap = exp(params.ray_rate_fitted);
    let gamma = params.pdp_decay;
    let m = params.analytic_m;
    for l in 0..real.cluster_times.len() {
        let start = real.cluster_times[l];
        let span = real.cluster_end(l) - start;
        let mut delays = vec![0.0];
        let mut tau = ray_gap.sample(rng);
        while tau < span {
            delays.push(tau);
            tau += ray_gap.sample(rng);
        }
        let powers: Vec<f64> = delays.iter().map(|d| (-(start + d) / gamma).exp()).collect();
        push_faded_cluster(real, delays, powers, |_| m, rng);
    }
}

fn fill_full<R: Rng + ?Sized>(real: &mut ChannelRealization, params: &ChannelParams, rng: &mut R) {
    let extras = params.oracle_extras.expect("checked by caller");
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mix = [exp(params.ray_rate_1), exp(params.ray_rate_2)];
    for l in 0..real.cluster_times.len() {
        let start = real.cluster_times[l];
        let decay = extras.ray_decay_intercept + extras.ray_decay_slope * start;
        let shadow: f64 = std_normal.sample(rng);
        let cluster_power = (-start / extras.cluster_decay).exp() * 10f64.powf(extras.cluster_shadowing_db * shadow / 10.0)
            / decay;
        let cutoff = decay * (1.0 / RAY_PDP_FLOOR).ln();
        let mut delays = Vec::new();
        let mut powers = Vec::new();
        let mut tau = 0.0;
        while tau < cutoff {
            let ray_shadow: f64 = std_normal.sample(rng);
            delays.push(tau);
            powers.push(cluster_power * (-tau / decay).exp() * 10f64.powf(extras.ray_shadowing_db * ray_shadow / 10.0));
            let which = if rng.random::<f64>() < params.mix_beta { 0 } else { 1 };
            tau += mix[which].sample(rng);
        }
        let (m0, m0_hat) = (params.nakagami_m0, params.nakagami_m0_hat);
        push_faded_cluster(
            real,
            delays,
            powers,
            |rng| {
                let z: f64 = std_normal.sample(rng);
                (m0 + m0_hat * z).exp().max(MIN_NAKAGAMI_M)
            },
            rng,
        );
    }
}

/// Squared amplitudes are Gamma(m, Ω/m), the exact squared-Nakagami law.
fn push_faded_cluster<R, M>(real: &mut ChannelRealization, delays: Vec<f64>, powers: Vec<f64>, mut m_factor: M, rng: &mut R)
where
    R: Rng + ?Sized,
    M: FnMut(&mut R) -> f64,
{
    let mut gains = Vec::with_capacity(delays.len());
    let mut phases = Vec::with_capacity(delays.len());
    for &omega in &powers {
        let m = m_factor(rng);
        let power = Gamma::new(m, omega / m).expect("positive shape and scale").sample(rng);
        gains.push(power.sqrt());
        phases.push(rng.random::<f64>() * TAU);
    }
    real.ray_delays.push(delays);
    real.mean_powers.push(powers);
    real.tap_gains.push(gains);
    real.phases.push(phases);
}

fn normalize(real: &mut ChannelRealization) {
    let energy = real.total_energy();
    if energy > 0.0 {
        let s = energy.sqrt();
        real.tap_gains.iter_mut().flatten().for_each(|a| *a /= s);
    }
}

/// Power of the rays arriving at or after the chip boundary.
pub fn interference_power(real: &ChannelRealization, tc: ChipTime) -> f64 {
    kahan_sum(real.rays().filter(|(d, _, _)| *d >= tc.ns()).map(|(_, a, _)| a * a)).clamp(0.0, 1.0)
}

/// Samples of one scalar statistic and their first two moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub samples: Vec<f64>,
    pub seed: u64,
    pub runs: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub standard_error: f64,
}

impl McEstimate {
    pub fn from_samples(samples: Vec<f64>, seed: u64) -> Self {
        let runs = samples.len();
        let n = runs as f64;
        let mean = if runs > 0 { kahan_sum(samples.iter().copied()) / n } else { f64::NAN };
        let variance = if runs > 1 {
            kahan_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0)
        } else {
            0.0
        };
        let standard_error = if runs > 0 { (variance / n).sqrt() } else { f64::NAN };
        McEstimate { samples, seed, runs, mean, variance, standard_error }
    }

    /// Standard error of the sample variance, from the fourth central moment.
    pub fn variance_standard_error(&self) -> f64 {
        let n = self.runs as f64;
        if self.runs < 2 {
            return f64::NAN;
        }
        let m4 = kahan_sum(self.samples.iter().map(|x| (x - self.mean).powi(4))) / n;
        ((m4 - self.variance * self.variance * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Interference power over `runs` independent realizations.
pub fn mc_interference(
    params: &ChannelParams,
    mode: OracleMode,
    tc: ChipTime,
    runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    if runs == 0 {
        return Err(Error::Validation("at least one Monte-Carlo run is required".into()));
    }
    let samples = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            Ok(interference_power(&generate_realization(params, mode, &mut rng)?, tc))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(samples, seed))
}

/// Event the conditional Monte-Carlo estimate is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Exactly `L` clusters; generated directly.
    ClusterCount(u32),
    /// The chip boundary falls in cluster `ℓ ≥ 1`, i.e. `T_{ℓ-1} ≤ T_c < T_ℓ`;
    /// obtained by rejection.
    ChipInCluster(u32),
}

/// Statistics of realizations satisfying a [`Condition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub condition: Condition,
    /// Empirical pmf of the number of rays at or after `T_c`.
    pub path_counts: DiscretePmf,
    /// Mean PDP value of the interfering rays (before fading and
    /// normalization), one sample per realization with at least one.
    pub excess_pdp: McEstimate,
    /// Interference power of every accepted realization.
    pub interference: McEstimate,
    pub acceptance_rate: f64,
    pub attempts: u64,
}

struct ConditionalSample {
    paths: u64,
    excess_pdp: Option<f64>,
    power: f64,
}

fn conditional_sample(real: &ChannelRealization, tc: ChipTime) -> ConditionalSample {
    let beyond: Vec<f64> = real.rays().filter(|(d, _, _)| *d >= tc.ns()).map(|(_, _, w)| w).collect();
    let excess_pdp = (!beyond.is_empty()).then(|| kahan_sum(beyond.iter().copied()) / beyond.len() as f64);
    ConditionalSample { paths: beyond.len() as u64, excess_pdp, power: interference_power(real, tc) }
}

fn chip_in_cluster(real: &ChannelRealization, ell: u32, tc: ChipTime) -> bool {
    let l = ell as usize;
    l >= 1 && l <= real.cluster_count() && real.cluster_times[l - 1] <= tc.ns() && tc.ns() < real.cluster_end(l - 1)
}

pub fn mc_conditional(
    params: &ChannelParams,
    mode: OracleMode,
    tc: ChipTime,
    condition: Condition,
    runs: usize,
    seed: u64,
) -> Result<ConditionalEstimate> {
    if runs == 0 {
        return Err(Error::Validation("at least one Monte-Carlo run is required".into()));
    }
    let (accepted, attempts) = match condition {
        Condition::ClusterCount(clusters) => {
            let samples = (0..runs as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream_rng(seed, i);
                    Ok(conditional_sample(&generate_with_clusters(params, mode, clusters, &mut rng)?, tc))
                })
                .collect::<Result<Vec<_>>>()?;
            (samples, runs as u64)
        }
        Condition::ChipInCluster(ell) => {
            if ell == 0 {
                return Err(Error::Domain("cluster index must be at least 1".into()));
            }
            let mut accepted = Vec::with_capacity(runs);
            let mut attempts = 0u64;
            while accepted.len() < runs {
                let chunk = (attempts..attempts + REJECTION_CHUNK)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = stream_rng(seed, i);
                        let real = generate_realization(params, mode, &mut rng)?;
                        Ok(chip_in_cluster(&real, ell, tc).then(|| conditional_sample(&real, tc)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                // stop counting at the draw that fills the quota so the
                // acceptance rate is not biased by the unused chunk tail
                for s in chunk {
                    attempts += 1;
                    if let Some(s) = s {
                        accepted.push(s);
                        if accepted.len() == runs {
                            break;
                        }
                    }
                }
                let rate = accepted.len() as f64 / attempts as f64;
                if attempts as f64 >= 10.0 / MIN_ACCEPTANCE_RATE && rate < MIN_ACCEPTANCE_RATE {
                    return Err(Error::RejectionBudget { rate, min_rate: MIN_ACCEPTANCE_RATE });
                }
            }
            (accepted, attempts)
        }
    };
    let counts: Vec<u64> = accepted.iter().map(|s| s.paths).collect();
    let pdp: Vec<f64> = accepted.iter().filter_map(|s| s.excess_pdp).collect();
    let power: Vec<f64> = accepted.iter().map(|s| s.power).collect();
    Ok(ConditionalEstimate {
        condition,
        path_counts: DiscretePmf::from_counts(&counts),
        excess_pdp: McEstimate::from_samples(pdp, seed),
        interference: McEstimate::from_samples(power, seed),
        acceptance_rate: accepted.len() as f64 / attempts as f64,
        attempts,
    })
}

/// Number of Poisson(`rate`) ray arrivals in a gap of length `z`.
pub fn ray_count_in_gap<R: Rng + ?Sized>(rate: f64, z: f64, rng: &mut R) -> u64 {
    let gap = exp(rate);
    let mut n = 0;
    let mut t = gap.sample(rng);
    while t < z {
        n += 1;
        t += gap.sample(rng);
    }
    n
}

/// Empirical law of ray counts in a fixed gap `z`.
pub fn mc_ray_counts_fixed_gap(rate: f64, z: f64, runs: usize, seed: u64) -> DiscretePmf {
    let counts: Vec<u64> = (0..runs as u64)
        .into_par_iter()
        .map(|i| ray_count_in_gap(rate, z, &mut stream_rng(seed, i)))
        .collect();
    DiscretePmf::from_counts(&counts)
}

/// Empirical law of the rays that follow a cluster's first ray before the
/// next cluster starts, with an exponential cluster gap.
pub fn mc_ray_counts_cluster_gap(params: &ChannelParams, runs: usize, seed: u64) -> DiscretePmf {
    let gap = exp(params.cluster_rate);
    let counts: Vec<u64> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let z = gap.sample(&mut rng);
            ray_count_in_gap(params.ray_rate_fitted, z, &mut rng)
        })
        .collect();
    DiscretePmf::from_counts(&counts)
}
