//! `mnss`: exact streamline proximity search and the analyses built on it,
//! as batch subcommands over the crate's file formats.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors. All
//! diagnostics go to standard error; data goes to files or standard output
//! only. Same flags and seeds produce byte-identical outputs regardless of
//! `--threads`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgAction, Args, Parser, Subcommand};

use mnss::analysis::{
    build_radius_graph, cluster, segment_to_atlas, BundleAtlas,
};
use mnss::index::{IndexParams, SearchIndex};
use mnss::io;
use mnss::par::with_threads;
use mnss::stats::reliability_report;
use mnss::synth::{random_soup, run_bench, scatter_outliers, BenchConfig, BenchTask, BundleRecipe};
use mnss::{Error, Exponent, NormSpec, OrientationPolicy, Tractogram};

#[derive(Parser)]
#[command(
    name = "mnss",
    version,
    about = "Exact mixed-norm proximity search for tractography streamlines",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for batch stages (0 = all cores). Falls back to the
    /// MNSS_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct NormArgs {
    /// Inner exponent over the 3 coordinates of each point difference: 1, 2, inf
    #[arg(long, default_value = "2")]
    inner: String,
    /// Outer exponent across a streamline's points: 1, 2, inf
    #[arg(long, default_value = "1")]
    outer: String,
    /// Divide the outer aggregation by K^(1/outer) (the averaged convention;
    /// the default L2,1-avg is the mean point-wise Euclidean distance)
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    average: bool,
}

impl NormArgs {
    fn spec(&self) -> Result<NormSpec, Error> {
        Ok(NormSpec::new(
            self.inner.parse::<Exponent>()?,
            self.outer.parse::<Exponent>()?,
            self.average,
        ))
    }
}

#[derive(Args, Debug, Clone)]
struct IndexArgs {
    /// Resample point count K (flattened dimensionality is 3K)
    #[arg(long, default_value_t = 32)]
    points: usize,
    /// Max rows per k-d tree leaf
    #[arg(long, default_value_t = 16)]
    leaf_capacity: usize,
    /// Orientation policy: direct or direct-flip (default depends on the
    /// subcommand: direct-flip for knn/radius/segment, direct for
    /// graph/cluster/filter)
    #[arg(long)]
    orientation: Option<String>,
}

impl IndexArgs {
    fn params(&self, norm: &NormArgs, default_policy: OrientationPolicy) -> Result<IndexParams, Error> {
        let policy = match &self.orientation {
            Some(s) => s.parse()?,
            None => default_policy,
        };
        Ok(IndexParams {
            k_points: self.points,
            spec: norm.spec()?,
            policy,
            leaf_capacity: self.leaf_capacity,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Resample streamlines to a fixed point count
    Resample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a search index and write it as a snapshot
    IndexBuild {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// K nearest neighbors for every query streamline
    Knn {
        /// Dataset tractogram (an index is built on the fly) ...
        #[arg(long = "in", conflicts_with = "index")]
        input: Option<PathBuf>,
        /// ... or a prebuilt index snapshot
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Neighbor count
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// All neighbors within a distance radius, per query streamline
    Radius {
        #[arg(long = "in", conflicts_with = "index")]
        input: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Search radius, mm (reporting convention of the norm)
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label each streamline with its nearest atlas bundle within a radius
    Segment {
        /// Atlas tractogram
        #[arg(long)]
        atlas: PathBuf,
        /// Per-atlas-streamline bundle labels
        #[arg(long)]
        labels: PathBuf,
        /// Optional bundle names (id name per line)
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Assignment gate, mm
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        /// Output label file, one line per input streamline (-1 = unassigned)
        #[arg(long)]
        out: PathBuf,
        /// Optional per-query details: query, label, distance, nearest atlas id
        #[arg(long)]
        details: Option<PathBuf>,
    },
    /// Build the sparse radius graph of a tractogram
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a tractogram: connected components of the radius graph
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        /// Components smaller than this become noise
        #[arg(long, default_value_t = 10)]
        min_size: usize,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        /// Output: header "N C", then per node "cluster density" (-1 = noise)
        #[arg(long)]
        out: PathBuf,
        /// Optional cluster mean streamlines as TCK
        #[arg(long)]
        centroids: Option<PathBuf>,
    },
    /// Drop streamlines that fall in small clusters (density filtering)
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[arg(long, default_value_t = 10)]
        min_size: usize,
        #[command(flatten)]
        norm: NormArgs,
        #[command(flatten)]
        index_args: IndexArgs,
        /// Surviving streamlines
        #[arg(long)]
        out: PathBuf,
        /// Optional rejected streamlines
        #[arg(long)]
        removed: Option<PathBuf>,
    },
    /// Clopper-Pearson reliability report for a connectivity count matrix
    StatsCi {
        /// Count matrix: header "R n", then "i j count" triplets
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Optional hemisphere label per region, one per line
        #[arg(long)]
        hemispheres: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic tractogram
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bundle count (bundle mode)
        #[arg(long, default_value_t = 3)]
        bundles: usize,
        /// Members per bundle (bundle mode)
        #[arg(long, default_value_t = 200)]
        members: usize,
        #[arg(long, default_value_t = 2.0)]
        tube_radius: f64,
        #[arg(long, default_value_t = 0.4)]
        jitter: f64,
        /// Minimum inter-bundle gap, mm
        #[arg(long, default_value_t = 40.0)]
        min_gap: f64,
        /// Append this many isolated outlier streamlines
        #[arg(long, default_value_t = 0)]
        outliers: usize,
        /// Instead of bundles: this many independent random-walk streamlines
        #[arg(long, conflicts_with_all = ["bundles", "members"])]
        soup: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth bundle labels (outliers get -1)
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Time pipeline stages over seeded synthetic workloads
    Bench {
        /// One of: build, knn-self, segment, segment-brute, graph
        #[arg(long, default_value = "knn-self")]
        task: String,
        /// Comma-separated dataset sizes
        #[arg(long, default_value = "10000", value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Comma-separated worker counts
        #[arg(long = "threads-list", default_value = "1", value_delimiter = ',')]
        threads_list: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[arg(long, default_value_t = 30000)]
        atlas_size: usize,
        #[arg(long, default_value_t = 33)]
        atlas_bundles: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is usage.
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    let threads = cli
        .threads
        .or_else(|| std::env::var("MNSS_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);

    match with_threads(threads, || run(cli.command, threads)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mnss: error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}

/// 1 for usage-level problems, 2 for data errors.
fn classify(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) | Some(Error::InvalidAlpha(_)) => 1,
        Some(_) => 2,
        None => 2,
    }
}

/// Deterministic provenance header echoed into text outputs.
fn provenance(cmd: &str, fields: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# mnss {cmd}");
    for (k, v) in fields {
        let _ = writeln!(out, "# {k} {v}");
    }
    out
}

fn write_text(path: &PathBuf, header: String, body: String) -> anyhow::Result<()> {
    std::fs::write(path, header + &body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_tractogram(path: &PathBuf) -> anyhow::Result<Tractogram> {
    io::read_tck(path).with_context(|| format!("reading {}", path.display()))
}

fn load_or_build_index(
    input: &Option<PathBuf>,
    snapshot: &Option<PathBuf>,
    norm: &NormArgs,
    index_args: &IndexArgs,
    default_policy: OrientationPolicy,
) -> anyhow::Result<SearchIndex> {
    match (input, snapshot) {
        (Some(path), None) => {
            let data = load_tractogram(path)?;
            Ok(SearchIndex::build(&data, index_args.params(norm, default_policy)?)?)
        }
        (None, Some(path)) => {
            Ok(io::read_index_snapshot(path)
                .with_context(|| format!("reading {}", path.display()))?)
        }
        _ => Err(anyhow!(Error::InvalidArgument(
            "exactly one of --in or --index is required".into()
        ))),
    }
}

fn neighbor_table(results: &[Vec<mnss::Neighbor>]) -> String {
    let mut body = String::new();
    for (q, hits) in results.iter().enumerate() {
        for (rank, h) in hits.iter().enumerate() {
            let _ = writeln!(
                body,
                "{q} {rank} {} {} {}",
                h.id,
                h.distance,
                h.flipped as u8
            );
        }
    }
    body
}

fn run(command: Command, threads: usize) -> anyhow::Result<()> {
    match command {
        Command::Resample { input, points, out } => {
            let data = load_tractogram(&input)?;
            let mut resampled = Vec::with_capacity(data.len());
            for (i, s) in data.iter().enumerate() {
                resampled.push(
                    s.resample(points)
                        .with_context(|| format!("streamline {i}"))?
                        .to_streamline(),
                );
            }
            io::write_tck(&Tractogram::new(resampled), &out)?;
        }

        Command::IndexBuild {
            input,
            norm,
            index,
            out,
        } => {
            let data = load_tractogram(&input)?;
            let params = index.params(&norm, OrientationPolicy::DirectFlip)?;
            let built = SearchIndex::build(&data, params)?;
            io::write_index_snapshot(&built, &out)?;
        }

        Command::Knn {
            input,
            index,
            queries,
            k,
            norm,
            index_args,
            out,
        } => {
            let idx = load_or_build_index(&input, &index, &norm, &index_args, OrientationPolicy::DirectFlip)?;
            let qs = load_tractogram(&queries)?;
            let results = idx.batch_knn(&qs, k)?;
            let header = provenance(
                "knn",
                &[
                    ("k", k.to_string()),
                    ("norm", idx.spec().to_string()),
                    ("orientation", idx.policy().to_string()),
                    ("points", idx.k_points().to_string()),
                    ("columns", "query rank id distance flipped".into()),
                ],
            );
            write_text(&out, header, neighbor_table(&results))?;
        }

        Command::Radius {
            input,
            index,
            queries,
            radius,
            norm,
            index_args,
            out,
        } => {
            let idx = load_or_build_index(&input, &index, &norm, &index_args, OrientationPolicy::DirectFlip)?;
            let qs = load_tractogram(&queries)?;
            let results = idx.batch_radius(&qs, radius)?;
            let header = provenance(
                "radius",
                &[
                    ("radius", radius.to_string()),
                    ("norm", idx.spec().to_string()),
                    ("orientation", idx.policy().to_string()),
                    ("points", idx.k_points().to_string()),
                    ("columns", "query rank id distance flipped".into()),
                ],
            );
            write_text(&out, header, neighbor_table(&results))?;
        }

        Command::Segment {
            atlas,
            labels,
            names,
            input,
            radius,
            norm,
            index_args,
            out,
            details,
        } => {
            let atlas_t = load_tractogram(&atlas)?;
            let atlas_labels: Vec<u32> = io::read_labels(&labels)?
                .into_iter()
                .map(|l| u32::try_from(l).map_err(|_| Error::InvalidArgument(format!("negative atlas label {l}"))))
                .collect::<Result<_, _>>()?;
            let names = match names {
                Some(path) => {
                    let pairs = io::read_label_names(&path)?;
                    let max = pairs.iter().map(|(id, _)| *id).max().unwrap_or(0);
                    let mut v = vec![String::new(); max as usize + 1];
                    for (id, name) in pairs {
                        v[id as usize] = name;
                    }
                    Some(v)
                }
                None => None,
            };
            let bundle_atlas = BundleAtlas::new(atlas_t.clone(), atlas_labels, names)?;
            let params = index_args.params(&norm, OrientationPolicy::DirectFlip)?;
            let idx = SearchIndex::build(&atlas_t, params)?;
            let qs = load_tractogram(&input)?;
            let seg = segment_to_atlas(&idx, &bundle_atlas, &qs, radius)?;
            let header = provenance(
                "segment",
                &[
                    ("radius", radius.to_string()),
                    ("norm", idx.spec().to_string()),
                    ("orientation", idx.policy().to_string()),
                    ("points", idx.k_points().to_string()),
                    ("atlas_streamlines", atlas_t.len().to_string()),
                    ("bundles", bundle_atlas.bundle_count().to_string()),
                ],
            );
            write_text(&out, header, io::segmentation_to_string(&seg))?;
            if let Some(path) = details {
                let mut body = String::new();
                for (q, a) in seg.assignments.iter().enumerate() {
                    let label = a.bundle.map(|b| b as i64).unwrap_or(-1);
                    let _ = writeln!(body, "{q} {label} {} {}", a.distance, a.nearest_atlas_id);
                }
                let header = provenance(
                    "segment-details",
                    &[("columns", "query label distance nearest_atlas_id".into())],
                );
                write_text(&path, header, body)?;
            }
        }

        Command::Graph {
            input,
            radius,
            norm,
            index_args,
            out,
        } => {
            let data = load_tractogram(&input)?;
            let params = index_args.params(&norm, OrientationPolicy::Direct)?;
            let idx = SearchIndex::build(&data, params)?;
            let graph = build_radius_graph(&idx, radius)?;
            let header = provenance(
                "graph",
                &[
                    ("radius", radius.to_string()),
                    ("norm", idx.spec().to_string()),
                    ("orientation", idx.policy().to_string()),
                    ("points", idx.k_points().to_string()),
                ],
            );
            write_text(&out, header, io::graph_to_string(&graph))?;
        }

        Command::Cluster {
            input,
            radius,
            min_size,
            norm,
            index_args,
            out,
            centroids,
        } => {
            let data = load_tractogram(&input)?;
            let params = index_args.params(&norm, OrientationPolicy::Direct)?;
            let idx = SearchIndex::build(&data, params)?;
            let graph = build_radius_graph(&idx, radius)?;
            let set = cluster(&graph, min_size, &idx)?;
            let header = provenance(
                "cluster",
                &[
                    ("radius", radius.to_string()),
                    ("min_size", min_size.to_string()),
                    ("norm", idx.spec().to_string()),
                    ("orientation", idx.policy().to_string()),
                    ("points", idx.k_points().to_string()),
                ],
            );
            write_text(&out, header, io::clusters_to_string(&set))?;
            if let Some(path) = centroids {
                let t = Tractogram::new(
                    set.centroids.iter().map(|c| c.to_streamline()).collect(),
                );
                io::write_tck(&t, &path)?;
            }
        }

        Command::Filter {
            input,
            radius,
            min_size,
            norm,
            index_args,
            out,
            removed,
        } => {
            let data = load_tractogram(&input)?;
            let params = index_args.params(&norm, OrientationPolicy::Direct)?;
            let idx = SearchIndex::build(&data, params)?;
            let graph = build_radius_graph(&idx, radius)?;
            let set = cluster(&graph, min_size, &idx)?;
            let mut kept = Vec::new();
            let mut dropped = Vec::new();
            for (i, s) in data.iter().enumerate() {
                if set.assignment[i].is_some() {
                    kept.push(s.clone());
                } else {
                    dropped.push(s.clone());
                }
            }
            eprintln!(
                "mnss: filter kept {} of {} streamlines ({} noise)",
                kept.len(),
                data.len(),
                dropped.len()
            );
            io::write_tck(&Tractogram::new(kept), &out)?;
            if let Some(path) = removed {
                io::write_tck(&Tractogram::new(dropped), &path)?;
            }
        }

        Command::StatsCi {
            counts,
            alpha,
            hemispheres,
            out,
        } => {
            // Flag validation happens before any input is read.
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidAlpha(alpha).into());
            }
            let mut matrix = io::read_connectivity_matrix(&counts)?;
            if let Some(path) = hemispheres {
                matrix = matrix.with_hemispheres(io::read_hemispheres(&path)?)?;
            }
            let report = reliability_report(&matrix, alpha)?;
            let header = provenance(
                "stats-ci",
                &[("alpha", alpha.to_string()), ("counts", counts.display().to_string())],
            );
            write_text(&out, header, io::reliability_report_to_string(&report))?;
        }

        Command::Gen {
            seed,
            bundles,
            members,
            tube_radius,
            jitter,
            min_gap,
            outliers,
            soup,
            out,
            labels_out,
        } => {
            let (tractogram, labels) = match soup {
                Some(n) => {
                    let t = random_soup(seed, n, (40.0, 250.0), 200.0);
                    let labels = vec![0i64; t.len()];
                    (t, labels)
                }
                None => {
                    let recipe =
                        BundleRecipe::well_separated(seed, bundles, members, tube_radius, jitter, min_gap);
                    let (t, l) = recipe.generate();
                    (t, l.into_iter().map(|v| v as i64).collect())
                }
            };
            let mut streamlines = tractogram.streamlines().to_vec();
            let mut labels = labels;
            if outliers > 0 {
                for s in scatter_outliers(seed, outliers, 400.0) {
                    streamlines.push(s);
                    labels.push(-1);
                }
            }
            io::write_tck(&Tractogram::new(streamlines), &out)?;
            if let Some(path) = labels_out {
                io::write_labels(&labels, &path)?;
            }
        }

        Command::Bench {
            task,
            sizes,
            threads_list,
            repeats,
            seed,
            radius,
            atlas_size,
            atlas_bundles,
            out,
        } => {
            let config = BenchConfig {
                seed,
                task: task.parse::<BenchTask>()?,
                sizes,
                threads: threads_list,
                repeats,
                k_points: 32,
                radius,
                atlas_size,
                atlas_bundles,
            };
            let report = run_bench(&config)?;
            for w in &report.warnings {
                eprintln!("mnss: warning: {w}");
            }
            io::write_bench_report(&report, &out)?;
            // Human summary on stderr so stdout stays data-only.
            for e in &report.entries {
                eprintln!(
                    "mnss: bench {} n={} threads={} median {:.4}s{}",
                    e.task,
                    e.n,
                    e.threads,
                    e.median_secs,
                    e.speedup_vs_single
                        .map(|s| format!(" ({s:.2}x vs 1 thread)"))
                        .unwrap_or_default()
                );
            }
        }
    }
    let _ = threads;
    Ok(())
}
