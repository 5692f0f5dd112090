//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical code, so agreement is a genuine cross-check.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with Richardson correction, absolute tolerance.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // split first so narrow features are not missed by the initial rule
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + h };
            let (fa, fb) = (f(lo), f(hi));
            let fm = f(0.5 * (lo + hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Erlang(k, rate) distribution function via its Poisson series.
pub fn erlang_cdf(k: u32, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    let mut term = (-rate * x).exp();
    let mut head = term;
    for i in 1..k {
        term *= rate * x / i as f64;
        head += term;
    }
    (1.0 - head).max(0.0)
}

/// Half the L1 distance between two pmfs given as dense vectors from 0.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n).map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Empirical pmf of integer counts as a dense vector from 0.
pub fn empirical_pmf(counts: &[u64]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut p = vec![0.0; max + 1];
    for &c in counts {
        p[c as usize] += 1.0;
    }
    let n = counts.len() as f64;
    p.iter_mut().for_each(|v| *v /= n);
    p
}

/// Binomial standard deviation of a frequency estimate.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Trapezoid self-convolution of `f` on a uniform grid, `n` factors.
pub fn numeric_convolution(f: &[f64], h: f64, n: usize) -> Vec<f64> {
    let mut acc = f.to_vec();
    for _ in 1..n {
        acc = (0..f.len())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let inner: f64 = (1..i).map(|k| acc[k] * f[i - k]).sum();
                h * (inner + 0.5 * (acc[0] * f[i] + acc[i] * f[0]))
            })
            .collect();
    }
    acc
}
