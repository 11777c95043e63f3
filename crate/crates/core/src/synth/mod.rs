//! Seedable synthetic tractograms, brute-force oracles and the benchmark
//! harness.
//!
//! Everything here is the measuring stick for the rest of the crate: the
//! generator produces deterministic datasets with known ground truth, the
//! oracles answer queries by definition (full linear scan, no pruning), and
//! the bench harness compares tree vs scan and 1 vs N workers on the same
//! seeds.

mod bench;
mod gen;
mod oracle;
mod rng;

pub use bench::{bundled_tractogram, run_bench, BenchConfig, BenchEntry, BenchReport, BenchTask};
pub use gen::{
    atlas_and_queries, random_soup, scatter_outliers, smooth_centroid, uniform_segments,
    BundleRecipe, BundleSpec,
};
pub use oracle::BruteForce;
pub use rng::SplitMix64;
