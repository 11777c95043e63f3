//! Desk-scale benchmark harness: times pipeline stages over seeded synthetic
//! workloads at several dataset sizes and worker counts, reporting
//! lower-median wall times, thread speedups and visited-node counters.
//! Timings exclude file I/O and dataset generation; one warmup run per
//! configuration is discarded.

use std::time::Instant;

use crate::analysis::build_radius_graph;
use crate::error::Result;
use crate::index::{IndexParams, SearchIndex};
use crate::par::with_threads;
use crate::streamline::Tractogram;
use crate::synth::gen::BundleRecipe;
use crate::synth::oracle::BruteForce;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchTask {
    /// Index construction.
    Build,
    /// KNN(k=1) of the dataset against itself.
    SelfKnn,
    /// Nearest-atlas segmentation of the dataset against a bundled atlas.
    Segment,
    /// Same segmentation via the linear-scan oracle: the brute baseline.
    SegmentBrute,
    /// Radius-graph construction.
    Graph,
}

impl BenchTask {
    fn name(&self) -> &'static str {
        match self {
            BenchTask::Build => "build",
            BenchTask::SelfKnn => "knn-self",
            BenchTask::Segment => "segment",
            BenchTask::SegmentBrute => "segment-brute",
            BenchTask::Graph => "graph",
        }
    }
}

impl std::str::FromStr for BenchTask {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "build" => Ok(BenchTask::Build),
            "knn-self" => Ok(BenchTask::SelfKnn),
            "segment" => Ok(BenchTask::Segment),
            "segment-brute" => Ok(BenchTask::SegmentBrute),
            "graph" => Ok(BenchTask::Graph),
            other => Err(crate::error::Error::InvalidArgument(format!(
                "unknown bench task {other:?} (build, knn-self, segment, segment-brute, graph)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub task: BenchTask,
    /// Dataset (query) sizes to run.
    pub sizes: Vec<usize>,
    /// Worker counts; counts above the machine's parallelism are skipped
    /// with a warning.
    pub threads: Vec<usize>,
    /// Timed repetitions per configuration (after one discarded warmup).
    pub repeats: usize,
    pub k_points: usize,
    /// Radius for the graph task, reporting convention.
    pub radius: f64,
    /// Atlas size for the segment task.
    pub atlas_size: usize,
    pub atlas_bundles: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 0,
            task: BenchTask::SelfKnn,
            sizes: vec![10_000],
            threads: vec![1],
            repeats: 3,
            k_points: 32,
            radius: 8.0,
            atlas_size: 30_000,
            atlas_bundles: 33,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub task: String,
    pub n: usize,
    pub threads: usize,
    pub median_secs: f64,
    pub runs_secs: Vec<f64>,
    /// `median(1 thread) / median(this)` for the same task and size.
    pub speedup_vs_single: Option<f64>,
    pub visited_nodes: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub entries: Vec<BenchEntry>,
    pub machine_threads: usize,
    pub machine_os: String,
    pub warnings: Vec<String>,
}

/// A bundled dataset of about `n` streamlines (clustered, like real
/// tractograms, so tree pruning has structure to work with).
pub fn bundled_tractogram(seed: u64, n: usize) -> Tractogram {
    let bundles = (n / 1000).clamp(1, 64);
    let members = n.div_ceil(bundles);
    let recipe = BundleRecipe::well_separated(seed, bundles, members, 2.0, 0.4, 40.0);
    let (t, _) = recipe.generate();
    let mut streamlines: Vec<_> = t.streamlines().to_vec();
    streamlines.truncate(n);
    Tractogram::new(streamlines)
}

fn lower_median(mut runs: Vec<f64>) -> f64 {
    runs.sort_by(|a, b| a.total_cmp(b));
    runs[(runs.len() - 1) / 2]
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    let machine_threads = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    let mut warnings = Vec::new();
    let mut entries: Vec<BenchEntry> = Vec::new();

    for &n in &config.sizes {
        // Shared inputs per size; built outside the timed region.
        let data = bundled_tractogram(config.seed, n);
        let params = IndexParams {
            k_points: config.k_points,
            ..IndexParams::default()
        };
        let prebuilt = match config.task {
            BenchTask::Build => None,
            _ => Some(SearchIndex::build(&data, params)?),
        };
        let (atlas, atlas_brute) = match config.task {
            BenchTask::Segment | BenchTask::SegmentBrute => {
                let recipe = BundleRecipe::well_separated(
                    config.seed ^ 0xA71A5,
                    config.atlas_bundles,
                    config.atlas_size.div_ceil(config.atlas_bundles),
                    2.0,
                    0.4,
                    40.0,
                );
                let (t, _) = recipe.generate();
                if config.task == BenchTask::Segment {
                    (Some(SearchIndex::build(&t, params)?), None)
                } else {
                    let brute = BruteForce::new(
                        &t,
                        params.k_points,
                        params.spec,
                        params.policy,
                    )?;
                    (None, Some(brute))
                }
            }
            _ => (None, None),
        };

        for &threads in &config.threads {
            if threads > machine_threads {
                warnings.push(format!(
                    "skipping {} threads: machine has {machine_threads}",
                    threads
                ));
                continue;
            }
            let mut runs = Vec::with_capacity(config.repeats);
            let mut visited = None;
            for rep in 0..=config.repeats {
                let start = Instant::now();
                let v = with_threads(threads, || -> Result<Option<u64>> {
                    match config.task {
                        BenchTask::Build => {
                            let idx = SearchIndex::build(&data, params)?;
                            std::hint::black_box(idx.len());
                            Ok(None)
                        }
                        BenchTask::SelfKnn => {
                            let idx = prebuilt.as_ref().unwrap();
                            let (out, stats) = idx.batch_knn_with_stats(&data, 1)?;
                            std::hint::black_box(out.len());
                            Ok(Some(stats.nodes_visited))
                        }
                        BenchTask::Segment => {
                            let idx = atlas.as_ref().unwrap();
                            let (out, stats) = idx.batch_knn_with_stats(&data, 1)?;
                            std::hint::black_box(out.len());
                            Ok(Some(stats.nodes_visited))
                        }
                        BenchTask::SegmentBrute => {
                            let brute = atlas_brute.as_ref().unwrap();
                            let out = crate::par::map_range(data.len(), |i| {
                                brute.knn(&data.streamlines()[i], 1)
                            });
                            for r in out {
                                std::hint::black_box(r?.len());
                            }
                            Ok(None)
                        }
                        BenchTask::Graph => {
                            let idx = prebuilt.as_ref().unwrap();
                            let g = build_radius_graph(idx, config.radius)?;
                            std::hint::black_box(g.edge_count());
                            Ok(None)
                        }
                    }
                })?;
                let secs = start.elapsed().as_secs_f64();
                if rep > 0 {
                    // Warmup (rep 0) discarded.
                    runs.push(secs);
                    visited = v;
                }
            }
            entries.push(BenchEntry {
                task: config.task.name().to_string(),
                n,
                threads,
                median_secs: lower_median(runs.clone()),
                runs_secs: runs,
                speedup_vs_single: None,
                visited_nodes: visited,
            });
        }
    }

    // Speedups relative to the 1-thread entry of the same task and size.
    let singles: Vec<(String, usize, f64)> = entries
        .iter()
        .filter(|e| e.threads == 1)
        .map(|e| (e.task.clone(), e.n, e.median_secs))
        .collect();
    for e in &mut entries {
        if let Some((_, _, t1)) = singles
            .iter()
            .find(|(task, n, _)| *task == e.task && *n == e.n)
        {
            if e.median_secs > 0.0 {
                e.speedup_vs_single = Some(t1 / e.median_secs);
            }
        }
    }

    Ok(BenchReport {
        entries,
        machine_threads,
        machine_os: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
        warnings,
    })
}
