//! Numerical building blocks shared by the analytic chain: adaptive
//! Gauss-Kronrod quadrature, golden-section minimization, compensated
//! summation and log-domain special functions.

// tabulated nodes are kept at full published precision
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

// Kronrod abscissae for the 21-point rule; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_569_960,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut lower = [0.0; 10];
    let mut upper = [0.0; 10];
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        lower[j] = f(center - dx);
        upper[j] = f(center + dx);
        let pair = lower[j] + upper[j];
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let raw_err = ((kronrod - gauss) * half).abs();
    // QUADPACK-style error rescaling
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((lower[j] - mean).abs() + (upper[j] - mean).abs());
    }
    asc *= half.abs();
    let mut error = raw_err;
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * value.abs();
    if round_off > error {
        error = round_off;
    }
    Segment { a, b, value, error }
}

/// Globally adaptive 21-point Gauss-Kronrod quadrature on a finite interval.
///
/// Bisects the segment with the largest error estimate until the summed
/// error is within `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Integral> {
    integrate_with_limit(f, a, b, rel_tol, abs_tol, 4000)
}

pub fn integrate_with_limit<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0, intervals: 0 });
    }
    let mut segments = vec![gauss_kronrod_21(&f, a, b)];
    loop {
        let total: f64 = kahan_sum(segments.iter().map(|s| s.value));
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Integral { value: total, error: err, intervals: segments.len() });
        }
        if segments.len() >= max_intervals {
            return Err(Error::Quadrature { estimate: total, error_bound: err, intervals: segments.len() });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval can no longer be split in floating point
            return Err(Error::Quadrature { estimate: total, error_bound: err, intervals: segments.len() + 1 });
        }
        segments.push(gauss_kronrod_21(&f, seg.a, mid));
        segments.push(gauss_kronrod_21(&f, mid, seg.b));
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
/// Returns the abscissa of the minimum once the bracket is narrower than `x_tol`.
pub fn golden_section_min<F>(f: F, lo: f64, hi: f64, x_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..max_iter {
        if (b - a).abs() <= x_tol {
            let mid = 0.5 * (a + b);
            // the minimum may sit on a bracket endpoint
            let candidates = [(lo.min(hi), f(lo.min(hi))?), (mid, f(mid)?), (lo.max(hi), f(lo.max(hi))?)];
            let best = candidates
                .iter()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("three candidates");
            return Ok(best.0);
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Err(Error::NoConvergence { lo: a, hi: b, iterations: max_iter })
}

/// Kahan-Babuska compensated summation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln((n choose k))` via log-gamma; valid well beyond `n = 170`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Poisson log-pmf `ln(mu^k e^{-mu} / k!)`; `mu = 0` gives the degenerate law at 0.
pub fn ln_poisson_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mu.ln() - mu - ln_factorial(k)
}

pub fn poisson_pmf(k: u64, mu: f64) -> f64 {
    ln_poisson_pmf(k, mu).exp()
}

/// `P(N <= k)` for `N ~ Poisson(mu)`, summed in log space.
pub fn poisson_cdf(k: u64, mu: f64) -> f64 {
    kahan_sum((0..=k).map(|i| poisson_pmf(i, mu))).min(1.0)
}

/// `P(N > k)` for `N ~ Poisson(mu)`, summed directly over the tail so it
/// stays accurate when the head is close to one.
pub fn poisson_sf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut terms = Vec::new();
    let mut i = k + 1;
    loop {
        let t = poisson_pmf(i, mu);
        terms.push(t);
        if (i as f64) > mu && t < 1e-20 * terms[0].max(f64::MIN_POSITIVE) {
            break;
        }
        if t == 0.0 && (i as f64) > mu {
            break;
        }
        i += 1;
    }
    kahan_sum(terms).min(1.0)
}

/// Log-density of a Gamma(shape, scale) law at `x > 0`.
pub fn ln_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + kahan_sum(values.iter().map(|v| (v - max).exp())).ln()
}
