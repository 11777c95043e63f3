//! Connection-probability estimation for streamline-count connectivity
//! matrices: the binomial point estimate, exact Clopper–Pearson confidence
//! intervals, and the interval-size-over-estimate reliability diagnostic.

mod beta;

pub use beta::{inv_reg_inc_beta, ln_beta, ln_gamma, reg_inc_beta};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `p_hat = c / n` and its variance `p_hat (1 - p_hat) / n`.
pub fn point_estimate(c: u64, n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::ZeroSeedCount);
    }
    if c > n {
        return Err(Error::CountExceedsTotal { c, n });
    }
    let p = c as f64 / n as f64;
    Ok((p, p * (1.0 - p) / n as f64))
}

/// Exact (conservative) two-sided binomial confidence interval at
/// significance `alpha`.
///
/// `lo` is the beta quantile at `alpha/2` with parameters `(c, n-c+1)`, zero
/// when `c = 0`; `hi` the quantile at `1 - alpha/2` with `(c+1, n-c)`, one
/// when `c = n`.
pub fn clopper_pearson(c: u64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::ZeroSeedCount);
    }
    if c > n {
        return Err(Error::CountExceedsTotal { c, n });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let lo = if c == 0 {
        0.0
    } else {
        inv_reg_inc_beta(c as f64, (n - c) as f64 + 1.0, alpha / 2.0)
    };
    let hi = if c == n {
        1.0
    } else {
        inv_reg_inc_beta(c as f64 + 1.0, (n - c) as f64, 1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Everything known about one connectivity entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEstimate {
    pub c: u64,
    pub p_hat: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `(ci_hi - ci_lo) / p_hat`; infinite when `p_hat = 0`.
    pub ratio: f64,
}

/// Computes the full estimate for one entry.
pub fn edge_estimate(c: u64, n: u64, alpha: f64) -> Result<EdgeEstimate> {
    let (p_hat, variance) = point_estimate(c, n)?;
    let (ci_lo, ci_hi) = clopper_pearson(c, n, alpha)?;
    let ratio = if p_hat > 0.0 {
        (ci_hi - ci_lo) / p_hat
    } else {
        f64::INFINITY
    };
    Ok(EdgeEstimate {
        c,
        p_hat,
        variance,
        ci_lo,
        ci_hi,
        ratio,
    })
}

enum CountStorage {
    Dense(Vec<u64>),
    Sparse(BTreeMap<(u32, u32), u64>),
}

/// An `R x R` streamline-count matrix with the total seed count `n`.
/// Stored dense up to `R = 4096`, as sorted triplets beyond.
pub struct ConnectivityCounts {
    r: usize,
    n: u64,
    storage: CountStorage,
    names: Option<Vec<String>>,
    hemisphere: Option<Vec<u32>>,
}

const DENSE_LIMIT: usize = 4096;

impl ConnectivityCounts {
    /// Dense row-major counts; `counts.len()` must be `r * r`.
    pub fn dense(r: usize, n: u64, counts: Vec<u64>) -> Result<ConnectivityCounts> {
        if n == 0 {
            return Err(Error::ZeroSeedCount);
        }
        if counts.len() != r * r {
            return Err(Error::InvalidArgument(format!(
                "{} counts for an {r}x{r} matrix",
                counts.len()
            )));
        }
        if let Some(&c) = counts.iter().find(|&&c| c > n) {
            return Err(Error::CountExceedsTotal { c, n });
        }
        Ok(ConnectivityCounts {
            r,
            n,
            storage: CountStorage::Dense(counts),
            names: None,
            hemisphere: None,
        })
    }

    /// Builds from `(i, j, count)` triplets; unlisted entries are zero.
    pub fn from_triplets(r: usize, n: u64, triplets: &[(u32, u32, u64)]) -> Result<ConnectivityCounts> {
        if n == 0 {
            return Err(Error::ZeroSeedCount);
        }
        let mut map = BTreeMap::new();
        for &(i, j, c) in triplets {
            if i as usize >= r || j as usize >= r {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) out of range for R = {r}"
                )));
            }
            if c > n {
                return Err(Error::CountExceedsTotal { c, n });
            }
            if c == 0 {
                continue;
            }
            if map.insert((i, j), c).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate entry ({i}, {j})")));
            }
        }
        if r <= DENSE_LIMIT {
            let mut counts = vec![0u64; r * r];
            for ((i, j), c) in map {
                counts[i as usize * r + j as usize] = c;
            }
            ConnectivityCounts::dense(r, n, counts)
        } else {
            Ok(ConnectivityCounts {
                r,
                n,
                storage: CountStorage::Sparse(map),
                names: None,
                hemisphere: None,
            })
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.r {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} regions",
                names.len(),
                self.r
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Attaches a hemisphere label per region (any small integer labeling).
    pub fn with_hemispheres(mut self, hemisphere: Vec<u32>) -> Result<Self> {
        if hemisphere.len() != self.r {
            return Err(Error::InvalidArgument(format!(
                "{} hemisphere labels for {} regions",
                hemisphere.len(),
                self.r
            )));
        }
        self.hemisphere = Some(hemisphere);
        Ok(self)
    }

    pub fn regions(&self) -> usize {
        self.r
    }

    pub fn seeds(&self) -> u64 {
        self.n
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn hemispheres(&self) -> Option<&[u32]> {
        self.hemisphere.as_deref()
    }

    pub fn get(&self, i: u32, j: u32) -> u64 {
        match &self.storage {
            CountStorage::Dense(v) => v[i as usize * self.r + j as usize],
            CountStorage::Sparse(m) => m.get(&(i, j)).copied().unwrap_or(0),
        }
    }

    /// Nonzero entries in deterministic (row-major / key) order.
    pub fn nonzero(&self) -> Vec<(u32, u32, u64)> {
        match &self.storage {
            CountStorage::Dense(v) => {
                let mut out = Vec::new();
                for i in 0..self.r {
                    for j in 0..self.r {
                        let c = v[i * self.r + j];
                        if c > 0 {
                            out.push((i as u32, j as u32, c));
                        }
                    }
                }
                out
            }
            CountStorage::Sparse(m) => m.iter().map(|(&(i, j), &c)| (i, j, c)).collect(),
        }
    }
}

/// Per-hemisphere ratio medians: index = hemisphere label.
pub type HemisphereMedians = Vec<Option<f64>>;

/// The reliability report: per-edge estimates plus the summary statistics.
/// Entries with `c = 0` carry ratio infinity and are excluded from medians
/// and from the above-1 fraction; their count is reported separately.
pub struct ReliabilityReport {
    pub alpha: f64,
    pub r: usize,
    pub n: u64,
    pub entries_total: u64,
    /// Entries with `c = 0` (ratio = inf).
    pub zero_entries: u64,
    pub finite_entries: u64,
    /// Among finite entries; `None` when there are none.
    pub fraction_ratio_above_1: Option<f64>,
    /// Lower median of finite ratios.
    pub median_ratio: Option<f64>,
    /// Present when a hemisphere partition is attached: lower median of
    /// finite ratios over intra-hemisphere entries, per hemisphere label.
    pub hemisphere_medians: Option<HemisphereMedians>,
    /// Histogram of `p_hat` by decade, plus the zero bin.
    pub phat_histogram: Vec<(String, u64)>,
    /// Per-entry estimates: every entry when `r <=` [`EDGE_GRID_LIMIT`],
    /// otherwise only entries with `c > 0`.
    pub edges: Vec<(u32, u32, EdgeEstimate)>,
}

/// Full per-entry grids are emitted only for small matrices.
pub const EDGE_GRID_LIMIT: usize = 128;

/// Decade histogram bin for a probability; comparisons against exact powers
/// of ten keep the binning platform-independent.
fn phat_bin(p: f64) -> usize {
    const CUTS: [f64; 10] = [
        1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0,
    ];
    for (b, &cut) in CUTS.iter().enumerate() {
        if p <= cut {
            return b;
        }
    }
    CUTS.len() - 1
}

fn phat_bin_label(b: usize) -> String {
    const NAMES: [&str; 10] = [
        "(0,1e-9]",
        "(1e-9,1e-8]",
        "(1e-8,1e-7]",
        "(1e-7,1e-6]",
        "(1e-6,1e-5]",
        "(1e-5,1e-4]",
        "(1e-4,1e-3]",
        "(1e-3,1e-2]",
        "(1e-2,1e-1]",
        "(1e-1,1]",
    ];
    NAMES[b].to_string()
}

/// Lower median: element at index `(len - 1) / 2` of the sorted values.
fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    Some(values[(values.len() - 1) / 2])
}

/// Computes the per-edge estimate grid and summary. Deterministic; entries
/// are memoized per distinct count so large sparse matrices stay cheap.
pub fn reliability_report(counts: &ConnectivityCounts, alpha: f64) -> Result<ReliabilityReport> {
    let r = counts.regions();
    let n = counts.seeds();
    // Validate alpha once up front.
    let _ = clopper_pearson(0, n, alpha)?;
    let mut memo: BTreeMap<u64, EdgeEstimate> = BTreeMap::new();
    let mut estimate = |c: u64| -> EdgeEstimate {
        *memo
            .entry(c)
            .or_insert_with(|| edge_estimate(c, n, alpha).expect("validated inputs"))
    };

    let nonzero = counts.nonzero();
    let entries_total = (r as u64) * (r as u64);
    let finite_entries = nonzero.len() as u64;
    let zero_entries = entries_total - finite_entries;

    let mut ratios: Vec<f64> = Vec::with_capacity(nonzero.len());
    let mut above_1 = 0u64;
    let mut hist = [0u64; 10];
    for &(_, _, c) in &nonzero {
        let e = estimate(c);
        ratios.push(e.ratio);
        if e.ratio > 1.0 {
            above_1 += 1;
        }
        hist[phat_bin(e.p_hat)] += 1;
    }

    let fraction_ratio_above_1 = if finite_entries > 0 {
        Some(above_1 as f64 / finite_entries as f64)
    } else {
        None
    };
    let median_ratio = lower_median(&mut ratios);

    let hemisphere_medians = counts.hemispheres().map(|hemi| {
        let labels = hemi.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut per: Vec<Vec<f64>> = vec![Vec::new(); labels];
        for &(i, j, c) in &nonzero {
            let (hi_, hj) = (hemi[i as usize], hemi[j as usize]);
            if hi_ == hj {
                per[hi_ as usize].push(estimate(c).ratio);
            }
        }
        per.into_iter().map(|mut v| lower_median(&mut v)).collect()
    });

    let mut histogram: Vec<(String, u64)> = vec![("0".to_string(), zero_entries)];
    for (b, &count) in hist.iter().enumerate() {
        histogram.push((phat_bin_label(b), count));
    }

    let edges = if r <= EDGE_GRID_LIMIT {
        let mut out = Vec::with_capacity(r * r);
        for i in 0..r as u32 {
            for j in 0..r as u32 {
                out.push((i, j, estimate(counts.get(i, j))));
            }
        }
        out
    } else {
        nonzero
            .iter()
            .map(|&(i, j, c)| (i, j, estimate(c)))
            .collect()
    };

    Ok(ReliabilityReport {
        alpha,
        r,
        n,
        entries_total,
        zero_entries,
        finite_entries,
        fraction_ratio_above_1,
        median_ratio,
        hemisphere_medians,
        phat_histogram: histogram,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_estimate_edge_cases() {
        assert_eq!(point_estimate(0, 100).unwrap(), (0.0, 0.0));
        assert_eq!(point_estimate(100, 100).unwrap(), (1.0, 0.0));
        let (p, v) = point_estimate(25, 100).unwrap();
        assert_eq!(p, 0.25);
        assert!((v - 1.875e-3).abs() < 1e-18);
    }

    #[test]
    fn point_estimate_rejects_bad_input() {
        assert!(matches!(
            point_estimate(5, 4),
            Err(Error::CountExceedsTotal { c: 5, n: 4 })
        ));
        assert!(matches!(point_estimate(0, 0), Err(Error::ZeroSeedCount)));
    }

    #[test]
    fn clopper_pearson_zero_count_closed_form() {
        let (lo, hi) = clopper_pearson(0, 100, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        let expect = 1.0 - (0.025f64).powf(1.0 / 100.0);
        assert!((hi - expect).abs() < 1e-9, "hi={hi} expect={expect}");
        assert!((hi - 0.03622).abs() < 5e-6);
    }

    #[test]
    fn clopper_pearson_full_count_closed_form() {
        let (lo, hi) = clopper_pearson(100, 100, 0.05).unwrap();
        assert_eq!(hi, 1.0);
        let expect = (0.025f64).powf(1.0 / 100.0);
        assert!((lo - expect).abs() < 1e-9);
        assert!((lo - 0.96378).abs() < 5e-6);
    }

    #[test]
    fn clopper_pearson_known_midpoint_case() {
        // c=5, n=10 at 95%: the classic (0.1871, 0.8129) interval.
        let (lo, hi) = clopper_pearson(5, 10, 0.05).unwrap();
        assert!((lo - 0.1871).abs() < 1e-4, "lo={lo}");
        assert!((hi - 0.8129).abs() < 1e-4, "hi={hi}");
    }

    #[test]
    fn clopper_pearson_rejects_bad_alpha() {
        assert!(matches!(
            clopper_pearson(1, 10, 0.0),
            Err(Error::InvalidAlpha(_))
        ));
        assert!(matches!(
            clopper_pearson(1, 10, 1.0),
            Err(Error::InvalidAlpha(_))
        ));
    }

    #[test]
    fn interval_nesting_and_monotone_alpha() {
        for n in [1u64, 7, 100] {
            for c in 0..=n {
                let (p, _) = point_estimate(c, n).unwrap();
                let (lo1, hi1) = clopper_pearson(c, n, 0.01).unwrap();
                let (lo5, hi5) = clopper_pearson(c, n, 0.05).unwrap();
                assert!(0.0 <= lo5 && lo5 <= p && p <= hi5 && hi5 <= 1.0);
                // Smaller alpha means a wider interval.
                assert!(lo1 <= lo5 + 1e-12 && hi5 <= hi1 + 1e-12);
            }
        }
    }

    #[test]
    fn interval_symmetry() {
        for (c, n) in [(3u64, 10u64), (0, 17), (12, 20)] {
            let (lo, hi) = clopper_pearson(c, n, 0.05).unwrap();
            let (mlo, mhi) = clopper_pearson(n - c, n, 0.05).unwrap();
            assert!((lo - (1.0 - mhi)).abs() < 1e-10);
            assert!((hi - (1.0 - mlo)).abs() < 1e-10);
        }
    }

    #[test]
    fn ratio_is_infinite_for_zero_counts() {
        let e = edge_estimate(0, 1000, 0.05).unwrap();
        assert!(e.ratio.is_infinite());
        assert_eq!(e.p_hat, 0.0);
    }

    #[test]
    fn report_on_all_zero_counts() {
        let counts = ConnectivityCounts::dense(3, 100, vec![0; 9]).unwrap();
        let rep = reliability_report(&counts, 0.05).unwrap();
        assert_eq!(rep.zero_entries, 9);
        assert_eq!(rep.finite_entries, 0);
        assert!(rep.fraction_ratio_above_1.is_none());
        assert!(rep.median_ratio.is_none());
        assert_eq!(rep.edges.len(), 9);
        assert!(rep.edges.iter().all(|(_, _, e)| e.ratio.is_infinite()));
        assert_eq!(rep.phat_histogram[0], ("0".to_string(), 9));
    }

    #[test]
    fn report_single_edge_composes_the_oracles() {
        let counts =
            ConnectivityCounts::from_triplets(2, 1000, &[(0, 1, 250)]).unwrap();
        let rep = reliability_report(&counts, 0.05).unwrap();
        let (lo, hi) = clopper_pearson(250, 1000, 0.05).unwrap();
        let edge = rep
            .edges
            .iter()
            .find(|(i, j, _)| (*i, *j) == (0, 1))
            .unwrap();
        assert!((edge.2.ratio - (hi - lo) / 0.25).abs() < 1e-12);
        assert_eq!(rep.finite_entries, 1);
    }

    #[test]
    fn scaling_counts_by_100_shrinks_every_ratio() {
        let base: Vec<(u32, u32, u64)> = vec![(0, 1, 3), (1, 0, 25), (1, 1, 250)];
        let small = ConnectivityCounts::from_triplets(2, 1000, &base).unwrap();
        let scaled: Vec<(u32, u32, u64)> =
            base.iter().map(|&(i, j, c)| (i, j, c * 100)).collect();
        let big = ConnectivityCounts::from_triplets(2, 100_000, &scaled).unwrap();
        let rep_s = reliability_report(&small, 0.05).unwrap();
        let rep_b = reliability_report(&big, 0.05).unwrap();
        for (es, eb) in rep_s.edges.iter().zip(&rep_b.edges) {
            assert_eq!((es.0, es.1), (eb.0, eb.1));
            if es.2.ratio.is_finite() {
                assert!(
                    eb.2.ratio < es.2.ratio,
                    "entry ({},{}) ratio {} !< {}",
                    es.0,
                    es.1,
                    eb.2.ratio,
                    es.2.ratio
                );
            }
        }
    }

    #[test]
    fn hemisphere_medians_split_by_partition() {
        // Region 0,1 in hemisphere 0; region 2,3 in hemisphere 1.
        let triplets = vec![
            (0u32, 1u32, 500u64), // intra-0, tight ratio
            (2, 3, 2),            // intra-1, loose ratio
            (0, 2, 100),          // inter; excluded from hemisphere medians
        ];
        let counts = ConnectivityCounts::from_triplets(4, 1000, &triplets)
            .unwrap()
            .with_hemispheres(vec![0, 0, 1, 1])
            .unwrap();
        let rep = reliability_report(&counts, 0.05).unwrap();
        let medians = rep.hemisphere_medians.unwrap();
        let m0 = medians[0].unwrap();
        let m1 = medians[1].unwrap();
        assert!(m0 < m1, "tight {m0} vs loose {m1}");
    }
}
