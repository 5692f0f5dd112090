//! Commands behind the CLI: analytic tabulation, Monte-Carlo simulation,
//! analytic-versus-simulation comparison and chip-time sweeps.
//!
//! Every command is a pure function of its inputs and writes its primary
//! outputs with fixed column order and shortest round-trip float
//! formatting, so identical invocations give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ChipTime;
use crate::error::{Error, Result};
use crate::oracle::{mc_conditional, mc_interference, Condition, McEstimate, OracleMode};
use crate::params::ChannelParams;
use crate::paths::path_count_pmf;
use crate::pdp::{
    interference_distribution, interference_moments, GridSpec, InterferenceModel, MixedDistribution, PowerNormalization,
};

/// Exit code for a failed upper-bound check under `--strict`.
pub const EXIT_BOUND_VIOLATION: i32 = 4;
/// Samples within this distance of one are treated as the full-power atom.
const FULL_POWER_ATOL: f64 = 1e-9;
const MAX_BINS: usize = 1000;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| Error::Serde(e.to_string()))
}

/// Freedman-Diaconis bin edges covering `[min, max]` of the samples.
/// Degenerate samples (one value, or zero spread) get a single bin.
pub fn freedman_diaconis_edges(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < sorted.len() {
            sorted[i] + frac * (sorted[i + 1] - sorted[i])
        } else {
            sorted[i]
        }
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if !(width > 0.0) || hi <= lo {
        return vec![lo, hi];
    }
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS);
    let step = (hi - lo) / bins as f64;
    (0..=bins).map(|i| if i == bins { hi } else { lo + step * i as f64 }).collect()
}

/// Counts per bin; the last bin is closed on the right.
pub fn histogram_counts(samples: &[f64], edges: &[f64]) -> Vec<u64> {
    let bins = edges.len().saturating_sub(1);
    let mut counts = vec![0u64; bins];
    if bins == 0 {
        return counts;
    }
    for &x in samples {
        let j = edges.partition_point(|e| *e <= x).saturating_sub(1).min(bins - 1);
        if x >= edges[0] && x <= edges[bins] {
            counts[j] += 1;
        }
    }
    counts
}

/// Parameters shared by every command, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub cm: String,
    pub env: String,
    pub tc_ns: f64,
    pub runs: usize,
    pub seed: u64,
    pub mode: OracleMode,
    pub normalization: PowerNormalization,
    pub analytic_m: f64,
    pub ray_rate_fitted_per_ns: f64,
}

impl RunConfig {
    pub fn new(
        params: &ChannelParams,
        tc: ChipTime,
        runs: usize,
        seed: u64,
        mode: OracleMode,
        normalization: PowerNormalization,
    ) -> Self {
        RunConfig {
            cm: params.id.clone(),
            env: params.env.to_string(),
            tc_ns: tc.ns(),
            runs,
            seed,
            mode,
            normalization,
            analytic_m: params.analytic_m,
            ray_rate_fitted_per_ns: params.ray_rate_fitted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTerm {
    pub clusters: u32,
    pub weight: f64,
    pub omega: f64,
    pub mean_paths: f64,
    pub zero_mass: f64,
    pub path_tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub config: RunConfig,
    pub mean: f64,
    pub variance: f64,
    pub mass_at_zero: f64,
    pub full_power_mass: f64,
    pub full_power_level: f64,
    pub total_energy_pdp_units: f64,
    pub diagnostics: crate::pdp::Diagnostics,
    pub clusters: Vec<ClusterTerm>,
}

impl AnalyzeSummary {
    fn new(config: RunConfig, model: &InterferenceModel, dist: &MixedDistribution) -> Self {
        AnalyzeSummary {
            config,
            mean: dist.mean,
            variance: dist.variance,
            mass_at_zero: dist.mass_at_zero,
            full_power_mass: dist.full_power_mass,
            full_power_level: dist.full_power_level,
            total_energy_pdp_units: model.total_energy,
            diagnostics: dist.diagnostics.clone(),
            clusters: dist
                .components
                .iter()
                .map(|(w, c)| ClusterTerm {
                    clusters: c.clusters,
                    weight: *w,
                    omega: c.omega,
                    mean_paths: c.paths.mean(),
                    zero_mass: c.zero_mass(),
                    path_tail_mass: c.paths.tail_mass,
                })
                .collect(),
        }
    }
}

/// Tabulate `g(x)`; writes `density.csv` (`x,density,cumulative`) and
/// `summary.json`.
pub fn cmd_analyze(
    params: &ChannelParams,
    tc: ChipTime,
    grid: Option<GridSpec>,
    normalization: PowerNormalization,
    out: &Path,
) -> Result<(MixedDistribution, AnalyzeSummary)> {
    let model = InterferenceModel::new(params, normalization)?;
    let dist = interference_distribution(&model, tc, grid)?;
    let mut csv = String::from("x,density,cumulative\n");
    for ((x, d), c) in dist.grid.iter().zip(&dist.density).zip(&dist.cumulative) {
        csv.push_str(&format!("{x},{d},{c}\n"));
    }
    write_file(out, "density.csv", &csv)?;
    let config = RunConfig::new(params, tc, 0, 0, OracleMode::Simplified, normalization);
    let summary = AnalyzeSummary::new(config, &model, &dist);
    write_file(out, "summary.json", &to_json(&summary)?)?;
    Ok((dist, summary))
}

/// Simulate interference power; writes `samples.csv`
/// (`run_index,interference_power`) and `histogram.csv`
/// (`bin_left,bin_right,count`) on Freedman-Diaconis bins.
pub fn cmd_simulate(
    params: &ChannelParams,
    mode: OracleMode,
    tc: ChipTime,
    runs: usize,
    seed: u64,
    out: &Path,
) -> Result<McEstimate> {
    let est = mc_interference(params, mode, tc, runs, seed)?;
    let mut csv = String::from("run_index,interference_power\n");
    for (i, x) in est.samples.iter().enumerate() {
        csv.push_str(&format!("{i},{x}\n"));
    }
    write_file(out, "samples.csv", &csv)?;
    let edges = freedman_diaconis_edges(&est.samples);
    let counts = histogram_counts(&est.samples, &edges);
    let mut hist = String::from("bin_left,bin_right,count\n");
    for (j, c) in counts.iter().enumerate() {
        hist.push_str(&format!("{},{},{c}\n", edges[j], edges[j + 1]));
    }
    write_file(out, "histogram.csv", &hist)?;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub statistic: String,
    pub analytic: f64,
    pub empirical: f64,
    pub standard_error: f64,
    /// `analytic >= empirical`.
    pub upper_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFlags {
    pub mean: bool,
    pub variance: bool,
}

impl BoundFlags {
    pub fn all(&self) -> bool {
        self.mean && self.variance
    }
}

/// Binned shape comparison of the analytic law and the MC sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeComparison {
    pub tv_distance: f64,
    pub continuous_bins: usize,
    pub zero_mass_analytic: f64,
    pub zero_mass_empirical: f64,
    pub full_power_mass_analytic: f64,
    pub full_power_mass_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCountReport {
    pub clusters: u32,
    pub runs: usize,
    pub tv_distance: f64,
    pub analytic_mean: f64,
    pub empirical_mean: f64,
    pub analytic_zero_mass: f64,
    pub empirical_zero_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: RunConfig,
    pub moment_table: Vec<MomentRow>,
    pub bound_flags: BoundFlags,
    /// Analytic over empirical mean.
    pub mean_ratio: f64,
    pub shape: ShapeComparison,
    pub path_counts: Vec<PathCountReport>,
    pub diagnostics: crate::pdp::Diagnostics,
}

impl ComparisonReport {
    /// Exit code the CLI uses under `--strict`.
    pub fn strict_exit_code(&self) -> i32 {
        if self.bound_flags.all() {
            0
        } else {
            EXIT_BOUND_VIOLATION
        }
    }
}

/// Total-variation distance between the analytic law and the samples, with
/// the zero and full-power atoms compared as their own cells and the
/// continuous part binned on Freedman-Diaconis edges of the positive
/// non-atomic samples. The outermost bins are open-ended on the analytic
/// side.
pub fn shape_comparison(dist: &MixedDistribution, samples: &[f64]) -> ShapeComparison {
    let n = samples.len() as f64;
    let at_full = |x: f64| dist.full_power_mass > 0.0 && (x - dist.full_power_level).abs() <= FULL_POWER_ATOL;
    let zeros = samples.iter().filter(|x| **x == 0.0).count() as f64 / n;
    let fulls = samples.iter().filter(|x| at_full(**x)).count() as f64 / n;
    let interior: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0 && !at_full(*x)).collect();
    let mut l1 = (zeros - dist.mass_at_zero).abs() + (fulls - dist.full_power_mass).abs();
    let mut bins = 0;
    if interior.is_empty() {
        l1 += dist.continuous_cdf_at(f64::INFINITY);
    } else {
        let mut edges = freedman_diaconis_edges(&interior);
        let counts = histogram_counts(&interior, &edges);
        bins = counts.len();
        edges[0] = 0.0;
        let last = edges.len() - 1;
        edges[last] = f64::INFINITY;
        let cdf: Vec<f64> = edges.iter().map(|e| dist.continuous_cdf_at(*e)).collect();
        for (j, c) in counts.iter().enumerate() {
            l1 += (*c as f64 / n - (cdf[j + 1] - cdf[j])).abs();
        }
    }
    ShapeComparison {
        tv_distance: 0.5 * l1,
        continuous_bins: bins,
        zero_mass_analytic: dist.mass_at_zero,
        zero_mass_empirical: zeros,
        full_power_mass_analytic: dist.full_power_mass,
        full_power_mass_empirical: fulls,
    }
}

/// Path-count pmf given `L` clusters against direct conditional simulation
/// in simplified mode (the counting model the pmf describes).
pub fn path_count_report(
    params: &ChannelParams,
    tc: ChipTime,
    clusters: u32,
    runs: usize,
    seed: u64,
) -> Result<PathCountReport> {
    let analytic = path_count_pmf(clusters as u64, tc, params.env, params)?;
    let mc = mc_conditional(params, OracleMode::Simplified, tc, Condition::ClusterCount(clusters), runs, seed)?;
    let empirical = mc.path_counts;
    Ok(PathCountReport {
        clusters,
        runs,
        tv_distance: analytic.tv_distance(&empirical),
        analytic_mean: analytic.mean(),
        empirical_mean: empirical.mean(),
        analytic_zero_mass: analytic.prob(0),
        empirical_zero_mass: empirical.prob(0),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_compare(
    params: &ChannelParams,
    mode: OracleMode,
    normalization: PowerNormalization,
    tc: ChipTime,
    runs: usize,
    seed: u64,
    path_clusters: &[u32],
    out: Option<&Path>,
) -> Result<ComparisonReport> {
    let model = InterferenceModel::new(params, normalization)?;
    let dist = interference_distribution(&model, tc, None)?;
    let mc = mc_interference(params, mode, tc, runs, seed)?;
    let moment_table = vec![
        MomentRow {
            statistic: "mean".into(),
            analytic: dist.mean,
            empirical: mc.mean,
            standard_error: mc.standard_error,
            upper_bounds: dist.mean >= mc.mean,
        },
        MomentRow {
            statistic: "variance".into(),
            analytic: dist.variance,
            empirical: mc.variance,
            standard_error: mc.variance_standard_error(),
            upper_bounds: dist.variance >= mc.variance,
        },
    ];
    let bound_flags = BoundFlags { mean: moment_table[0].upper_bounds, variance: moment_table[1].upper_bounds };
    let shape = shape_comparison(&dist, &mc.samples);
    let path_counts = path_clusters
        .iter()
        .map(|&l| path_count_report(params, tc, l, runs, seed))
        .collect::<Result<Vec<_>>>()?;
    let report = ComparisonReport {
        config: RunConfig::new(params, tc, runs, seed, mode, normalization),
        mean_ratio: dist.mean / mc.mean,
        moment_table,
        bound_flags,
        shape,
        path_counts,
        diagnostics: dist.diagnostics.clone(),
    };
    if let Some(dir) = out {
        write_file(dir, "report.json", &to_json(&report)?)?;
    }
    Ok(report)
}

/// Inclusive arithmetic range `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl TcRange {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + self.step * i as f64).collect()
    }
}

impl std::str::FromStr for TcRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("chip-time range must look like `start:stop:step`, got `{s}`"));
        let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        if parts.len() != 3 {
            return Err(bad());
        }
        let (start, stop, step) = (parts[0], parts[1], parts[2]);
        if !(start >= 0.0 && stop >= start && step > 0.0 && stop.is_finite()) {
            return Err(Error::Validation(format!("chip-time range must be non-empty and ascending, got `{s}`")));
        }
        Ok(TcRange { start, stop, step })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tc_ns: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cm: String,
    pub target_mean_power: f64,
    pub selected_tc_ns: Option<f64>,
    pub rows: Vec<SweepRow>,
}

/// Smallest swept chip time whose analytic mean interference is at most
/// `target`. Writes `sweep.csv` and `sweep.json` (the latter also when the
/// target is unattainable, before the error is returned).
pub fn cmd_sweep(
    params: &ChannelParams,
    normalization: PowerNormalization,
    chip_times: &[f64],
    target: f64,
    out: Option<&Path>,
) -> Result<SweepReport> {
    if chip_times.is_empty() || chip_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("chip-time sweep must be non-empty and strictly ascending".into()));
    }
    let model = InterferenceModel::new(params, normalization)?;
    let mut rows = Vec::with_capacity(chip_times.len());
    for &t in chip_times {
        let summary = interference_moments(&model, ChipTime::new(t)?)?;
        rows.push(SweepRow { tc_ns: t, mean: summary.mean, variance: summary.variance });
    }
    let selected_tc_ns = rows.iter().find(|r| r.mean <= target).map(|r| r.tc_ns);
    let report = SweepReport { cm: params.id.clone(), target_mean_power: target, selected_tc_ns, rows };
    if let Some(dir) = out {
        let mut csv = String::from("tc_ns,mean,variance\n");
        for r in &report.rows {
            csv.push_str(&format!("{},{},{}\n", r.tc_ns, r.mean, r.variance));
        }
        write_file(dir, "sweep.csv", &csv)?;
        write_file(dir, "sweep.json", &to_json(&report)?)?;
    }
    match selected_tc_ns {
        Some(_) => Ok(report),
        None => Err(Error::Unattainable { target }),
    }
}
