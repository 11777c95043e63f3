//! Clopper–Pearson against the independent binomial-CDF bisection oracle,
//! plus Monte Carlo coverage.

mod common;

use common::{binomial_draw, cp_oracle, LnFactorial};
use mnss::stats::clopper_pearson;
use mnss::synth::SplitMix64;

#[test]
fn intervals_agree_with_binomial_cdf_oracle_spot_checks() {
    let lnf = LnFactorial::up_to(256);
    for (c, n) in [(5u64, 10u64), (0, 17), (17, 17), (1, 100), (99, 100), (100, 200)] {
        let (lo, hi) = clopper_pearson(c, n, 0.05).unwrap();
        let (olo, ohi) = cp_oracle(c, n, 0.05, &lnf);
        assert!((lo - olo).abs() < 1e-8, "c={c} n={n}: lo {lo} vs {olo}");
        assert!((hi - ohi).abs() < 1e-8, "c={c} n={n}: hi {hi} vs {ohi}");
    }
}

#[test]
fn coverage_is_conservative() {
    // Known p, repeated draws: the 95% interval must cover p at least 94.5%
    // of the time (exact coverage is >= 95%; slack absorbs MC noise).
    let mut rng = SplitMix64::new(2024);
    for &p in &[0.01f64, 0.05, 0.5] {
        for &n in &[100u64, 1000] {
            let mut covered = 0u32;
            let mut memo = std::collections::HashMap::new();
            for _ in 0..10_000 {
                let c = binomial_draw(&mut rng, n, p);
                let (lo, hi) = *memo
                    .entry(c)
                    .or_insert_with(|| clopper_pearson(c, n, 0.05).unwrap());
                if lo <= p && p <= hi {
                    covered += 1;
                }
            }
            let coverage = covered as f64 / 10_000.0;
            assert!(
                coverage >= 0.945,
                "p={p} n={n}: coverage {coverage}"
            );
        }
    }
}
