//! Power-delay-profile approximations and the assembly of the interference
//! power law `g(x)`.
//!
//! The interfering power given `n` paths is a sum of `n` Gamma-distributed
//! path powers sharing one mean `Ω̄₀(L)`, so each conditional law is a
//! mixture of `Gamma(m·n, Ω̄₀/m)` densities weighted by the path-count pmf.
//! The full law mixes those over the Poisson cluster count and adds a point
//! mass at zero (no interfering path) and, for NLOS, a point mass at the
//! full received power (the chip ends before the first cluster).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::cluster::{ln_j_integral, ChipTime};
use crate::error::{Error, Result};
use crate::numeric::{integrate, kahan_sum, ln_factorial, ln_gamma_pdf};
use crate::params::{ChannelParams, EnvClass};
use crate::paths::{cluster_count_pmf, path_count_pmf, DiscretePmf};

/// Below this offset from `T_c` (in units of `Γ`) the excess-delay kernel
/// uses its Taylor expansion.
pub const KERNEL_TAYLOR_WINDOW: f64 = 1e-6;
/// Discarded tail of the mean-PDP integral relative to the head.
pub const MEAN_PDP_TAIL_TOL: f64 = 1e-10;
pub const MEAN_PDP_REL_TOL: f64 = 1e-8;
const MEAN_PDP_MAX_EXTENSIONS: usize = 64;
/// Path counts above this use log-domain Gamma evaluation.
const DIRECT_GAMMA_MAX_PATHS: u64 = 20;
pub const DEFAULT_GRID_POINTS: usize = 4001;

fn check_span(tc: ChipTime, t_last: f64) -> Result<f64> {
    let span = t_last - tc.ns();
    if !(span >= 0.0) {
        return Err(Error::Domain(format!("last cluster delay {t_last} precedes chip time {}", tc.ns())));
    }
    Ok(span)
}

/// Mean of `n` uniformly spaced samples of `e^{-t/Γ}` starting at `T_c`
/// with spacing `(T_L - T_c)/n`.
pub fn pdp_sampled(tc: ChipTime, t_last: f64, n_samples: u64, params: &ChannelParams) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Domain("at least one PDP sample is required".into()));
    }
    let span = check_span(tc, t_last)?;
    let gamma = params.pdp_decay;
    let g0 = (-tc.ns() / gamma).exp();
    if span == 0.0 {
        return Ok(g0);
    }
    let n = n_samples as f64;
    // (g_L - g_0) / (n ((g_L/g_0)^{1/n} - 1)), written with expm1 so large n keeps precision
    Ok(g0 * (-span / gamma).exp_m1() / (n * (-span / (n * gamma)).exp_m1()))
}

/// Large-`n` limit of [`pdp_sampled`]: the mean of `e^{-t/Γ}` over `[T_c, T_L]`.
pub fn pdp_approx(tc: ChipTime, t_last: f64, params: &ChannelParams) -> Result<f64> {
    let span = check_span(tc, t_last)?;
    let gamma = params.pdp_decay;
    let g0 = (-tc.ns() / gamma).exp();
    if span == 0.0 {
        return Ok(g0);
    }
    Ok(g0 * excess_kernel(span, gamma) * gamma)
}

/// `(1 - e^{-d/Γ}) / d`, with the removable singularity at `d = 0` handled
/// by a two-term expansion.
fn excess_kernel(d: f64, gamma: f64) -> f64 {
    if d < KERNEL_TAYLOR_WINDOW * gamma {
        (1.0 - 0.5 * d / gamma) / gamma
    } else {
        -(-d / gamma).exp_m1() / d
    }
}

fn ln_last_cluster_weight(order: u32, t: f64, rate: f64) -> f64 {
    let power = if order == 0 { 0.0 } else { order as f64 * t.ln() };
    power - rate * t
}

/// Density of the last cluster delay `T_L` given that it exceeds `T_c`:
/// `t^{L-1} e^{-Λt} / J_{L-1,Λ}(T_c)` for `t ≥ T_c`.
pub fn last_cluster_delay_pdf(clusters: u32, t: f64, tc: ChipTime, params: &ChannelParams) -> Result<f64> {
    if clusters == 0 {
        return Err(Error::Domain("cluster count must be at least 1".into()));
    }
    if t < tc.ns() {
        return Ok(0.0);
    }
    let order = clusters - 1;
    let rate = params.cluster_rate;
    Ok((ln_last_cluster_weight(order, t, rate) - ln_j_integral(order, rate, tc)).exp())
}

/// Mean excess-delay PDP `Ω̄₀(L)`: the PDP approximation averaged over the
/// conditional law of the last cluster delay.
///
/// The semi-infinite integral is truncated at `T_c + 40/Λ` and extended in
/// steps of `40/Λ` until the envelope bound on the discarded tail drops
/// below `1e-10` of the accumulated value.
pub fn mean_pdp(clusters: u32, tc: ChipTime, params: &ChannelParams) -> Result<f64> {
    if clusters == 0 {
        return Err(Error::Domain("cluster count must be at least 1".into()));
    }
    let order = clusters - 1;
    let rate = params.cluster_rate;
    let gamma = params.pdp_decay;
    let t = tc.ns();
    let g0 = (-t / gamma).exp();
    let ln_j = ln_j_integral(order, rate, tc);
    let integrand = |x: f64| {
        if x <= 0.0 && order > 0 {
            return 0.0;
        }
        gamma * g0 * excess_kernel(x - t, gamma) * (ln_last_cluster_weight(order, x, rate) - ln_j).exp()
    };

    let step = 40.0 / rate;
    let (mut lo, mut hi) = (t, t + step);
    let mut total = 0.0;
    for _ in 0..MEAN_PDP_MAX_EXTENSIONS {
        let piece = integrate(integrand, lo, hi, MEAN_PDP_REL_TOL, MEAN_PDP_REL_TOL * 1e-2 * total)?;
        total += piece.value;
        // the kernel is decreasing, so the tail is bounded by kernel(hi) times the weight's tail mass
        let weight_tail = (ln_j_integral(order, rate, ChipTime::new(hi)?) - ln_j).exp();
        let tail_bound = gamma * g0 * excess_kernel(hi - t, gamma) * weight_tail;
        if tail_bound < MEAN_PDP_TAIL_TOL * total {
            return Ok(total);
        }
        lo = hi;
        hi += step;
    }
    Err(Error::Quadrature { estimate: total, error_bound: f64::NAN, intervals: MEAN_PDP_MAX_EXTENSIONS })
}

/// Gamma(m, Ω/m) density of one path's power under Nakagami-m fading.
pub fn path_power_pdf(x: f64, omega: f64, m: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if m == 2.0 {
        let r = 2.0 / omega;
        return r * r * x * (-r * x).exp();
    }
    gamma_density(x, m, omega / m)
}

fn gamma_density(x: f64, shape: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape > 1.0 {
            0.0
        } else if shape == 1.0 {
            1.0 / scale
        } else {
            f64::INFINITY
        };
    }
    ln_gamma_pdf(x, shape, scale).exp()
}

/// Density of the sum of `n` independent `m = 2` path powers of mean
/// `omega0`: `Gamma(2n, Ω₀/2)`.
pub fn interference_pdf_given_n_l(x: f64, n: u64, omega0: f64) -> f64 {
    if x < 0.0 || n == 0 {
        return 0.0;
    }
    if n > DIRECT_GAMMA_MAX_PATHS || x == 0.0 {
        return gamma_density(x, 2.0 * n as f64, omega0 / 2.0);
    }
    let r = 2.0 / omega0;
    let k = 2 * n as i32;
    r.powi(k) * x.powi(k - 1) * (-r * x).exp() / ln_factorial(2 * n - 1).exp()
}

/// Sum of `n` independent Gamma(m, Ω/m) path powers, for any `m`.
pub fn gamma_sum_pdf(x: f64, n: u64, omega: f64, m: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    gamma_density(x, m * n as f64, omega / m)
}

/// Conditional interference density given `L` clusters with `Ω_c = 1`:
/// the path-count mixture of [`gamma_sum_pdf`] at `Ω̄₀(L)`. Excludes the
/// point masses.
pub fn interference_pdf_given_l(x: f64, clusters: u32, tc: ChipTime, params: &ChannelParams) -> Result<f64> {
    let model = InterferenceModel::new(params, PowerNormalization::Literal)?;
    Ok(model.conditional(clusters, tc)?.density(x))
}

/// How analytic powers are scaled relative to the oracle's realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerNormalization {
    /// Scale the cluster power so that the expected total received energy
    /// is one, matching unit-energy channel realizations.
    #[default]
    UnitEnergy,
    /// Cluster power `Ω_c = 1`; powers are in PDP units.
    Literal,
}

impl fmt::Display for PowerNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerNormalization::UnitEnergy => write!(f, "unit-energy"),
            PowerNormalization::Literal => write!(f, "literal"),
        }
    }
}

impl FromStr for PowerNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-energy" => Ok(PowerNormalization::UnitEnergy),
            "literal" => Ok(PowerNormalization::Literal),
            other => Err(Error::Validation(format!("unknown power normalization `{other}`"))),
        }
    }
}

/// Interference law conditioned on the cluster count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTerm {
    pub clusters: u32,
    /// Mean power per interfering path (already scaled).
    pub omega: f64,
    /// Nakagami m-factor of every path.
    pub m: f64,
    pub paths: DiscretePmf,
    /// Moments of the continuous part, `E[X 1{n ≥ 1}]` and `E[X² 1{n ≥ 1}]`.
    pub mean: f64,
    pub second_moment: f64,
}

impl ConditionalTerm {
    fn shape_and_scale(&self, n: u64) -> (f64, f64) {
        (self.m * n as f64, self.omega / self.m)
    }

    /// Continuous density at `x` (integrates to `1 - P(n = 0) - excluded`).
    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let start = self.paths.n_min.max(1);
        kahan_sum((start..=self.paths.n_max()).map(|n| {
            let p = self.paths.prob(n);
            if p == 0.0 {
                return 0.0;
            }
            let (shape, scale) = self.shape_and_scale(n);
            p * gamma_density(x, shape, scale)
        }))
    }

    /// Continuous part's probability in `[0, x]`.
    pub fn continuous_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let start = self.paths.n_min.max(1);
        kahan_sum((start..=self.paths.n_max()).map(|n| {
            let p = self.paths.prob(n);
            if p == 0.0 || x == f64::INFINITY {
                return p;
            }
            let (shape, scale) = self.shape_and_scale(n);
            p * gamma_lr(shape, x / scale)
        }))
    }

    /// Density on a whole grid; the per-path log-gamma constants are shared
    /// across abscissae.
    pub fn density_on(&self, grid: &[f64]) -> Vec<f64> {
        let start = self.paths.n_min.max(1);
        let scale = self.omega / self.m;
        let terms: Vec<(f64, f64, f64)> = (start..=self.paths.n_max())
            .filter_map(|n| {
                let p = self.paths.prob(n);
                (p > 0.0).then(|| {
                    let shape = self.m * n as f64;
                    (p.ln(), shape, ln_gamma(shape) + shape * scale.ln())
                })
            })
            .collect();
        grid.iter()
            .map(|&x| {
                if x < 0.0 {
                    0.0
                } else if x == 0.0 {
                    self.density(0.0)
                } else {
                    let lx = x.ln();
                    kahan_sum(terms.iter().map(|&(lp, shape, norm)| (lp + (shape - 1.0) * lx - x / scale - norm).exp()))
                }
            })
            .collect()
    }

    pub fn zero_mass(&self) -> f64 {
        self.paths.prob(0)
    }
}

/// Analytic interference model for one environment: the parameters plus
/// the power normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceModel {
    pub params: ChannelParams,
    pub normalization: PowerNormalization,
    /// Expected total received energy in PDP units.
    pub total_energy: f64,
    /// Factor applied to every path power.
    pub power_scale: f64,
    pub cluster_law: DiscretePmf,
}

impl InterferenceModel {
    pub fn new(params: &ChannelParams, normalization: PowerNormalization) -> Result<Self> {
        params.validate()?;
        let cluster_law = cluster_count_pmf(params);
        let total_energy = expected_total_energy(params, &cluster_law)?;
        let power_scale = match normalization {
            PowerNormalization::UnitEnergy => 1.0 / total_energy,
            PowerNormalization::Literal => 1.0,
        };
        Ok(InterferenceModel { params: params.clone(), normalization, total_energy, power_scale, cluster_law })
    }

    /// Level of the full-power point mass (1 under unit-energy scaling).
    pub fn full_power_level(&self) -> f64 {
        self.power_scale * self.total_energy
    }

    pub fn omega(&self, clusters: u32, tc: ChipTime) -> Result<f64> {
        Ok(self.power_scale * mean_pdp(clusters, tc, &self.params)?)
    }

    pub fn conditional(&self, clusters: u32, tc: ChipTime) -> Result<ConditionalTerm> {
        let omega = self.omega(clusters, tc)?;
        let paths = path_count_pmf(clusters as u64, tc, self.params.env, &self.params)?;
        let m = self.params.analytic_m;
        let en = paths.mean();
        let en2 = paths.second_moment();
        Ok(ConditionalTerm {
            clusters,
            omega,
            m,
            mean: omega * en,
            second_moment: omega * omega * (en / m + en2),
            paths,
        })
    }
}

/// Expected total energy at `T_c = 0` under the LOS convention: every path
/// interferes and `E[n | L] = L (1 + λ/Λ)`.
fn expected_total_energy(params: &ChannelParams, cluster_law: &DiscretePmf) -> Result<f64> {
    let origin = ChipTime::new(0.0)?;
    let paths_per_cluster = 1.0 + params.ray_rate_fitted / params.cluster_rate;
    let terms: Vec<f64> = (0..cluster_law.probs.len())
        .into_par_iter()
        .map(|i| {
            let clusters = cluster_law.n_min + i as u64;
            let omega = mean_pdp(clusters as u32, origin, params)?;
            Ok(cluster_law.probs[i] * clusters as f64 * paths_per_cluster * omega)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(kahan_sum(terms))
}

/// Evaluation abscissae `min:max:points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min >= 0.0 && max > min) || points < 2 {
            return Err(Error::Validation(format!(
                "grid needs 0 <= min < max and at least 2 points, got {min}:{max}:{points}"
            )));
        }
        Ok(GridSpec { min, max, points })
    }

    /// Default grid for a law with the given moments: `[0, max(1, mean + 20 sd)]`.
    pub fn default_for(mean: f64, sd: f64) -> Self {
        GridSpec { min: 0.0, max: (mean + 20.0 * sd).max(1.0), points: DEFAULT_GRID_POINTS }
    }

    pub fn abscissae(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.max } else { self.min + step * i as f64 })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Validation(format!("grid must look like `min:max:points`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let min = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
        let max = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
        let points = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
        GridSpec::new(min, max, points)
    }
}

/// Truncation and normalization bookkeeping of an assembled distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Cluster-count mass beyond the enumerated `L`.
    pub cluster_tail_mass: f64,
    /// Largest path-count tail over all `L`.
    pub max_path_tail_mass: f64,
    /// Continuous mass implied by the pmfs.
    pub continuous_mass: f64,
    /// Trapezoid integral of the density over the grid.
    pub grid_integral: f64,
    /// `|mass_at_zero + full_power_mass + grid_integral - 1|`.
    pub normalization_error: f64,
    pub power_normalization: PowerNormalization,
    pub power_scale: f64,
}

/// Interference-power law: point mass at zero, optional point mass at full
/// power, and a continuous density tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDistribution {
    pub chip_time: ChipTime,
    pub env: EnvClass,
    pub mass_at_zero: f64,
    pub full_power_mass: f64,
    pub full_power_level: f64,
    pub mean: f64,
    pub variance: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Distribution function on the grid, including both point masses.
    pub cumulative: Vec<f64>,
    /// Weight `P_L(L)` and conditional law for each enumerated `L`.
    pub components: Vec<(f64, ConditionalTerm)>,
    pub diagnostics: Diagnostics,
}

impl MixedDistribution {
    pub fn density_at(&self, x: f64) -> f64 {
        kahan_sum(self.components.iter().map(|(w, c)| w * c.density(x)))
    }

    /// Exact distribution function, `P(X ≤ x)`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let jump = if x >= self.full_power_level { self.full_power_mass } else { 0.0 };
        self.mass_at_zero + jump + self.continuous_cdf_at(x)
    }

    /// Probability of the continuous part in `[0, x]`, without point masses.
    pub fn continuous_cdf_at(&self, x: f64) -> f64 {
        kahan_sum(self.components.iter().map(|(w, c)| w * c.continuous_cdf(x)))
    }

    /// `P(a < X ≤ b)`.
    pub fn interval_prob(&self, a: f64, b: f64) -> f64 {
        (self.cdf_at(b) - self.cdf_at(a)).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Conditional terms of the mixture with their weights and the assembled
/// moments and point masses; everything except the density grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub mass_at_zero: f64,
    pub full_power_mass: f64,
    pub full_power_level: f64,
    pub mean: f64,
    pub variance: f64,
    pub components: Vec<(f64, ConditionalTerm)>,
}

/// Moments and point masses of `g(x)` for chip time `tc`.
///
/// The per-`L` terms are evaluated in parallel and summed in `L` order so
/// the result does not depend on scheduling.
pub fn interference_moments(model: &InterferenceModel, tc: ChipTime) -> Result<MixtureSummary> {
    let law = &model.cluster_law;
    let components: Vec<(f64, ConditionalTerm)> = (0..law.probs.len())
        .into_par_iter()
        .map(|i| {
            let clusters = (law.n_min + i as u64) as u32;
            Ok((law.probs[i], model.conditional(clusters, tc)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mass_at_zero = kahan_sum(components.iter().map(|(w, c)| w * c.zero_mass()));
    let full_power_mass = kahan_sum(components.iter().map(|(w, c)| w * c.paths.excluded_mass));
    let level = model.full_power_level();
    let mean = kahan_sum(components.iter().map(|(w, c)| w * c.mean)) + full_power_mass * level;
    let second = kahan_sum(components.iter().map(|(w, c)| w * c.second_moment)) + full_power_mass * level * level;
    Ok(MixtureSummary {
        mass_at_zero,
        full_power_mass,
        full_power_level: level,
        mean,
        variance: second - mean * mean,
        components,
    })
}

/// Assemble `g(x) = Σ_L P_L(L) g(x | L)` plus its point masses, with the
/// density tabulated on `grid` (or the default grid for its moments).
pub fn interference_distribution(
    model: &InterferenceModel,
    tc: ChipTime,
    grid: Option<GridSpec>,
) -> Result<MixedDistribution> {
    let law = &model.cluster_law;
    let MixtureSummary { mass_at_zero, full_power_mass, full_power_level: level, mean, variance, components } =
        interference_moments(model, tc)?;

    let spec = grid.unwrap_or_else(|| GridSpec::default_for(mean, variance.max(0.0).sqrt()));
    let xs = spec.abscissae();
    let per_l: Vec<Vec<f64>> = components.par_iter().map(|(_, c)| c.density_on(&xs)).collect();
    let density: Vec<f64> = (0..xs.len())
        .map(|j| kahan_sum(components.iter().zip(&per_l).map(|((w, _), d)| w * d[j])))
        .collect();

    let mut dist = MixedDistribution {
        chip_time: tc,
        env: model.params.env,
        mass_at_zero,
        full_power_mass,
        full_power_level: level,
        mean,
        variance,
        grid: xs,
        density,
        cumulative: Vec::new(),
        components,
        diagnostics: Diagnostics {
            cluster_tail_mass: law.tail_mass,
            max_path_tail_mass: 0.0,
            continuous_mass: 0.0,
            grid_integral: 0.0,
            normalization_error: 0.0,
            power_normalization: model.normalization,
            power_scale: model.power_scale,
        },
    };

    let start = dist.cdf_at(spec.min);
    let mut cumulative = Vec::with_capacity(dist.grid.len());
    let mut acc = start;
    let mut integral = 0.0;
    cumulative.push(acc);
    for j in 1..dist.grid.len() {
        let area = 0.5 * (dist.density[j] + dist.density[j - 1]) * (dist.grid[j] - dist.grid[j - 1]);
        integral += area;
        acc += area;
        let crossed = dist.grid[j - 1] < level && dist.grid[j] >= level;
        if crossed {
            acc += full_power_mass;
        }
        cumulative.push(acc);
    }
    dist.cumulative = cumulative;

    let continuous_mass = kahan_sum(
        dist.components
            .iter()
            .map(|(w, c)| w * (c.paths.enumerated_mass() - c.zero_mass())),
    );
    dist.diagnostics.max_path_tail_mass =
        dist.components.iter().map(|(_, c)| c.paths.tail_mass).fold(0.0, f64::max);
    dist.diagnostics.continuous_mass = continuous_mass;
    dist.diagnostics.grid_integral = integral;
    dist.diagnostics.normalization_error = (mass_at_zero + full_power_mass + integral - 1.0).abs();
    Ok(dist)
}
