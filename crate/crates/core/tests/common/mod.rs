//! Shared helpers for the integration suites: an independent binomial-CDF
//! oracle for the confidence intervals, and dataset shorthands.

#![allow(dead_code)]

use mnss::synth::SplitMix64;

/// ln(k!) table built by plain summation; shares nothing with the crate's
/// Lanczos ln_gamma.
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..=n {
            acc += (k as f64).ln();
            table.push(acc);
        }
        LnFactorial { table }
    }

    pub fn get(&self, k: u64) -> f64 {
        self.table[k as usize]
    }
}

/// P(X <= c) for X ~ Binomial(n, p), by direct summation of log-space pmf
/// terms.
pub fn binomial_cdf(c: u64, n: u64, p: f64, lnf: &LnFactorial) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if c >= n { 1.0 } else { 0.0 };
    }
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut acc = 0.0f64;
    for k in 0..=c.min(n) {
        let ln_pmf = lnf.get(n) - lnf.get(k) - lnf.get(n - k)
            + k as f64 * lp
            + (n - k) as f64 * lq;
        acc += ln_pmf.exp();
    }
    acc.min(1.0)
}

/// Clopper-Pearson bounds straight from the defining binomial tail equations,
/// solved by bisection on p. Independent of the beta-function path.
pub fn cp_oracle(c: u64, n: u64, alpha: f64, lnf: &LnFactorial) -> (f64, f64) {
    let half = alpha / 2.0;
    // Lower: largest p with P(X >= c; p) <= alpha/2, i.e. solve
    // 1 - CDF(c-1; p) = alpha/2. Monotone increasing in p.
    let lo = if c == 0 {
        0.0
    } else {
        bisect(|p| 1.0 - binomial_cdf(c - 1, n, p, lnf) - half)
    };
    // Upper: solve CDF(c; p) = alpha/2. Monotone decreasing in p.
    let hi = if c == n {
        1.0
    } else {
        bisect(|p| half - binomial_cdf(c, n, p, lnf))
    };
    (lo, hi)
}

/// Root of a monotone increasing function on [0, 1].
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Binomial draw as a sum of Bernoulli trials; deterministic given the rng.
pub fn binomial_draw(rng: &mut SplitMix64, n: u64, p: f64) -> u64 {
    let mut c = 0;
    for _ in 0..n {
        if rng.next_f64() < p {
            c += 1;
        }
    }
    c
}
