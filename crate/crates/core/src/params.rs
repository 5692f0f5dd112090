//! Channel parameter registry: loading, validation and the derived
//! single-Poisson ray rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::numeric::{golden_section_min, integrate};

/// The reference parameter document shipped with the crate.
pub const REFERENCE_PARAMS: &str = include_str!("../data/ieee802154a.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvClass {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
}

impl fmt::Display for EnvClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvClass::Los => write!(f, "LOS"),
            EnvClass::Nlos => write!(f, "NLOS"),
        }
    }
}

impl FromStr for EnvClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LOS" => Ok(EnvClass::Los),
            "NLOS" => Ok(EnvClass::Nlos),
            other => Err(Error::Validation(format!("unknown environment class `{other}`"))),
        }
    }
}

/// Extra parameters that enable full-fidelity channel generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleExtras {
    /// Inter-cluster energy decay constant, ns.
    pub cluster_decay: f64,
    /// Intra-cluster decay constant of the first cluster, ns.
    pub ray_decay_intercept: f64,
    /// Growth of the intra-cluster decay constant with cluster arrival time.
    pub ray_decay_slope: f64,
    /// Lognormal cluster shadowing deviation, dB.
    pub cluster_shadowing_db: f64,
    /// Lognormal per-ray shadowing deviation, dB.
    pub ray_shadowing_db: f64,
}

/// All stochastic-model parameters for one radio environment.
///
/// Rates are in 1/ns and time constants in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub id: String,
    pub env: EnvClass,
    /// Arrival rate of the first cluster.
    pub first_cluster_rate: f64,
    /// Cluster inter-arrival rate.
    pub cluster_rate: f64,
    pub ray_rate_1: f64,
    pub ray_rate_2: f64,
    /// Weight of `ray_rate_1` in the ray inter-arrival mixture.
    pub mix_beta: f64,
    /// Single-Poisson ray rate equivalent to the mixture.
    pub ray_rate_fitted: f64,
    /// Mean of the Poisson cluster count.
    pub mean_clusters: f64,
    /// Decay constant of the simplified exponential power delay profile.
    pub pdp_decay: f64,
    pub nakagami_m0: f64,
    pub nakagami_m0_hat: f64,
    /// Nakagami m-factor used by the analytic chain.
    pub analytic_m: f64,
    pub oracle_extras: Option<OracleExtras>,
}

const KEY_ENV: &str = "environment";
const KEY_LAMBDA0: &str = "first_cluster_rate_per_ns";
const KEY_CLUSTER_RATE: &str = "cluster_rate_per_ns";
const KEY_RAY1: &str = "ray_rate_1_per_ns";
const KEY_RAY2: &str = "ray_rate_2_per_ns";
const KEY_BETA: &str = "ray_mix_beta";
const KEY_FITTED: &str = "ray_rate_fitted_per_ns";
const KEY_LBAR: &str = "mean_cluster_count";
const KEY_DECAY: &str = "pdp_decay_ns";
const KEY_M0: &str = "nakagami_m0";
const KEY_M0_HAT: &str = "nakagami_m0_hat";
const KEY_M: &str = "analytic_m_factor";
const KEY_O_CLUSTER_DECAY: &str = "oracle_cluster_decay_ns";
const KEY_O_RAY_DECAY: &str = "oracle_ray_decay_intercept_ns";
const KEY_O_RAY_SLOPE: &str = "oracle_ray_decay_slope";
const KEY_O_CLUSTER_SHADOW: &str = "oracle_cluster_shadowing_db";
const KEY_O_RAY_SHADOW: &str = "oracle_ray_shadowing_db";

fn number(block: &Table, block_name: &str, key: &str) -> Result<f64> {
    match block.get(key) {
        None => Err(Error::MissingKey { block: block_name.to_string(), key: key.to_string() }),
        Some(v) => as_f64(v).ok_or_else(|| Error::Load(format!("key `{key}` in [{block_name}] is not a number"))),
    }
}

fn optional_number(block: &Table, block_name: &str, key: &str) -> Result<Option<f64>> {
    match block.get(key) {
        None => Ok(None),
        Some(_) => number(block, block_name, key).map(Some),
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Parse the block `cm_id` (case-insensitive) of a parameter document.
pub fn load_params(source: &str, cm_id: &str) -> Result<ChannelParams> {
    let doc: Table = source.parse().map_err(|e: toml::de::Error| Error::Load(e.to_string()))?;
    let wanted = cm_id.to_ascii_lowercase();
    let (name, block) = doc
        .iter()
        .find(|(k, _)| k.to_ascii_lowercase() == wanted)
        .ok_or_else(|| Error::Load(format!("no block [{wanted}] in parameter document")))?;
    let block = block
        .as_table()
        .ok_or_else(|| Error::Load(format!("[{name}] is not a table")))?;

    let env = match block.get(KEY_ENV) {
        None => return Err(Error::MissingKey { block: name.clone(), key: KEY_ENV.into() }),
        Some(Value::String(s)) => s.parse()?,
        Some(_) => return Err(Error::Load(format!("key `{KEY_ENV}` in [{name}] must be a string"))),
    };

    let extras = match optional_number(block, name, KEY_O_CLUSTER_DECAY)? {
        None => None,
        Some(cluster_decay) => Some(OracleExtras {
            cluster_decay,
            ray_decay_intercept: number(block, name, KEY_O_RAY_DECAY)?,
            ray_decay_slope: number(block, name, KEY_O_RAY_SLOPE)?,
            cluster_shadowing_db: number(block, name, KEY_O_CLUSTER_SHADOW)?,
            ray_shadowing_db: optional_number(block, name, KEY_O_RAY_SHADOW)?.unwrap_or(0.0),
        }),
    };

    let mut params = ChannelParams {
        id: name.clone(),
        env,
        first_cluster_rate: number(block, name, KEY_LAMBDA0)?,
        cluster_rate: number(block, name, KEY_CLUSTER_RATE)?,
        ray_rate_1: number(block, name, KEY_RAY1)?,
        ray_rate_2: number(block, name, KEY_RAY2)?,
        mix_beta: number(block, name, KEY_BETA)?,
        ray_rate_fitted: f64::NAN,
        mean_clusters: number(block, name, KEY_LBAR)?,
        pdp_decay: number(block, name, KEY_DECAY)?,
        nakagami_m0: number(block, name, KEY_M0)?,
        nakagami_m0_hat: number(block, name, KEY_M0_HAT)?,
        analytic_m: optional_number(block, name, KEY_M)?.unwrap_or(2.0),
        oracle_extras: extras,
    };
    params.validate_inputs()?;
    params.ray_rate_fitted = match optional_number(block, name, KEY_FITTED)? {
        Some(rate) => rate,
        None => fit_single_ray_rate(params.mix_beta, params.ray_rate_1, params.ray_rate_2)?,
    };
    params.validate()?;
    Ok(params)
}

/// Load a block from the bundled reference document.
pub fn reference_params(cm_id: &str) -> Result<ChannelParams> {
    load_params(REFERENCE_PARAMS, cm_id)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be strictly positive, got {v}")))
    }
}

impl ChannelParams {
    fn validate_inputs(&self) -> Result<()> {
        positive(KEY_LAMBDA0, self.first_cluster_rate)?;
        positive(KEY_CLUSTER_RATE, self.cluster_rate)?;
        positive(KEY_RAY1, self.ray_rate_1)?;
        positive(KEY_RAY2, self.ray_rate_2)?;
        positive(KEY_LBAR, self.mean_clusters)?;
        positive(KEY_DECAY, self.pdp_decay)?;
        if !(0.0..=1.0).contains(&self.mix_beta) {
            return Err(Error::Validation(format!("{KEY_BETA} must lie in [0, 1], got {}", self.mix_beta)));
        }
        if !(self.nakagami_m0_hat >= 0.0) || !self.nakagami_m0.is_finite() {
            return Err(Error::Validation(format!("{KEY_M0_HAT} must be non-negative")));
        }
        if !(self.analytic_m >= 0.5) {
            return Err(Error::Validation(format!("{KEY_M} must be at least 0.5, got {}", self.analytic_m)));
        }
        if let Some(x) = &self.oracle_extras {
            positive(KEY_O_CLUSTER_DECAY, x.cluster_decay)?;
            positive(KEY_O_RAY_DECAY, x.ray_decay_intercept)?;
            if !(x.ray_decay_slope >= 0.0) {
                return Err(Error::Validation(format!("{KEY_O_RAY_SLOPE} must be non-negative")));
            }
            if !(x.cluster_shadowing_db >= 0.0) || !(x.ray_shadowing_db >= 0.0) {
                return Err(Error::Validation("shadowing deviations must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Check every invariant, including the fitted ray rate.
    pub fn validate(&self) -> Result<()> {
        self.validate_inputs()?;
        let lo = self.ray_rate_1.min(self.ray_rate_2);
        let hi = self.ray_rate_1.max(self.ray_rate_2);
        if !(self.ray_rate_fitted >= lo && self.ray_rate_fitted <= hi) {
            return Err(Error::Validation(format!(
                "{KEY_FITTED} = {} outside [{lo}, {hi}]",
                self.ray_rate_fitted
            )));
        }
        Ok(())
    }

    /// Mean Nakagami m-factor of the lognormal m law.
    pub fn mean_m(&self) -> f64 {
        mean_nakagami_m(self.nakagami_m0, self.nakagami_m0_hat)
    }

    /// Serialize back to a one-block parameter document.
    pub fn to_toml(&self) -> String {
        let mut block = Table::new();
        block.insert(KEY_ENV.into(), Value::String(self.env.to_string()));
        let mut put = |k: &str, v: f64| {
            block.insert(k.into(), Value::Float(v));
        };
        put(KEY_LAMBDA0, self.first_cluster_rate);
        put(KEY_CLUSTER_RATE, self.cluster_rate);
        put(KEY_RAY1, self.ray_rate_1);
        put(KEY_RAY2, self.ray_rate_2);
        put(KEY_BETA, self.mix_beta);
        put(KEY_FITTED, self.ray_rate_fitted);
        put(KEY_LBAR, self.mean_clusters);
        put(KEY_DECAY, self.pdp_decay);
        put(KEY_M0, self.nakagami_m0);
        put(KEY_M0_HAT, self.nakagami_m0_hat);
        put(KEY_M, self.analytic_m);
        if let Some(x) = &self.oracle_extras {
            put(KEY_O_CLUSTER_DECAY, x.cluster_decay);
            put(KEY_O_RAY_DECAY, x.ray_decay_intercept);
            put(KEY_O_RAY_SLOPE, x.ray_decay_slope);
            put(KEY_O_CLUSTER_SHADOW, x.cluster_shadowing_db);
            put(KEY_O_RAY_SHADOW, x.ray_shadowing_db);
        }
        let mut doc = Table::new();
        doc.insert(self.id.clone(), Value::Table(block));
        doc.to_string()
    }
}

/// Squared error between the two-rate ray inter-arrival mixture and a
/// single exponential of rate `lambda`, integrated over `[0, 10 / min(rate1, rate2)]`.
pub fn ray_fit_objective(beta: f64, rate1: f64, rate2: f64, lambda: f64) -> Result<f64> {
    let horizon = 10.0 / rate1.min(rate2);
    let residual = |t: f64| {
        let mix = beta * rate1 * (-rate1 * t).exp() + (1.0 - beta) * rate2 * (-rate2 * t).exp();
        let single = lambda * (-lambda * t).exp();
        (mix - single).powi(2)
    };
    Ok(integrate(residual, 0.0, horizon, 1e-8, 1e-16)?.value)
}

/// Rate of the single Poisson ray process closest, in integrated squared
/// error of the inter-arrival densities, to the two-rate mixture.
pub fn fit_single_ray_rate(beta: f64, rate1: f64, rate2: f64) -> Result<f64> {
    positive("rate1", rate1)?;
    positive("rate2", rate2)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Validation(format!("beta must lie in [0, 1], got {beta}")));
    }
    if beta == 1.0 || rate1 == rate2 {
        return Ok(rate1);
    }
    if beta == 0.0 {
        return Ok(rate2);
    }
    let lo = rate1.min(rate2);
    let hi = rate1.max(rate2);
    golden_section_min(|l| ray_fit_objective(beta, rate1, rate2, l), lo, hi, 1e-10 * hi, 200)
}

/// Mean of the lognormal Nakagami m-factor, `exp(m0 + m0_hat^2 / 2)`.
pub fn mean_nakagami_m(m0: f64, m0_hat: f64) -> f64 {
    (m0 + 0.5 * m0_hat * m0_hat).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cm1_block_without(key: &str) -> String {
        let block = REFERENCE_PARAMS.split("[cm2]").next().unwrap();
        block
            .lines()
            .filter(|l| !l.starts_with(key))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn cm1_transcription_is_pinned() {
        let p = reference_params("CM1").unwrap();
        assert_eq!(p.env, EnvClass::Los);
        assert_eq!(p.cluster_rate, 0.047);
        assert_eq!(p.ray_rate_1, 1.54);
        assert_eq!(p.ray_rate_2, 0.15);
        assert_eq!(p.mix_beta, 0.095);
        assert_eq!(p.mean_clusters, 3.0);
        assert_eq!(p.pdp_decay, 22.61);
        assert_eq!(p.nakagami_m0, 0.67);
        assert_eq!(p.nakagami_m0_hat, 0.28);
        let x = p.oracle_extras.unwrap();
        assert_eq!(x.ray_decay_intercept, 12.53);
        assert_eq!(x.cluster_shadowing_db, 2.75);
    }

    #[test]
    fn all_reference_blocks_load() {
        for id in ["cm1", "cm2", "cm3", "cm4"] {
            let p = reference_params(id).unwrap();
            p.validate().unwrap();
        }
        assert_eq!(reference_params("cm2").unwrap().env, EnvClass::Nlos);
    }

    #[test]
    fn beta_out_of_range_is_rejected() {
        let doc = REFERENCE_PARAMS.replace("ray_mix_beta = 0.095", "ray_mix_beta = 1.3");
        let err = load_params(&doc, "cm1").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("ray_mix_beta")), "{err}");
    }

    #[test]
    fn missing_cluster_rate_names_the_key() {
        let doc = cm1_block_without("cluster_rate_per_ns");
        let err = load_params(&doc, "cm1").unwrap_err();
        assert!(err.to_string().contains("cluster_rate"), "{err}");
        assert!(matches!(err, Error::MissingKey { .. }));
    }

    #[test]
    fn non_positive_rate_is_rejected() {
        let doc = REFERENCE_PARAMS.replace("cluster_rate_per_ns = 0.047", "cluster_rate_per_ns = 0.0");
        assert!(matches!(load_params(&doc, "cm1"), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_oracle_block_is_permitted() {
        let doc = cm1_block_without("oracle_");
        let p = load_params(&doc, "cm1").unwrap();
        assert!(p.oracle_extras.is_none());
    }

    #[test]
    fn unknown_block_is_a_load_error() {
        assert!(matches!(reference_params("cm9"), Err(Error::Load(_))));
    }

    #[test]
    fn degenerate_mixtures_return_a_component() {
        assert_eq!(fit_single_ray_rate(1.0, 1.54, 0.15).unwrap(), 1.54);
        assert_eq!(fit_single_ray_rate(0.0, 1.54, 0.15).unwrap(), 0.15);
    }

    #[test]
    fn mean_m_degenerate_and_working_value() {
        assert_relative_eq!(mean_nakagami_m(0.3, 0.0), 0.3f64.exp());
        assert_relative_eq!(mean_nakagami_m(2f64.ln(), 0.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn fitted_rate_lies_in_bracket() {
        for id in ["cm1", "cm2", "cm3", "cm4"] {
            let p = reference_params(id).unwrap();
            assert!(p.ray_rate_fitted >= p.ray_rate_1.min(p.ray_rate_2));
            assert!(p.ray_rate_fitted <= p.ray_rate_1.max(p.ray_rate_2));
        }
    }
}
