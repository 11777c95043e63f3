//! Line-oriented text formats: label lists, graph and connectivity-matrix
//! triplets, key/value documents and report files.
//!
//! All formats share the same conventions: UTF-8, LF line endings, `#`
//! starts a comment, blank lines are ignored, headers are data lines with
//! counts, records follow one per line in deterministic order. Floats are
//! printed with Rust's shortest round-trip formatting so text round trips
//! are value-exact.

use std::fs;
use std::path::Path;

use crate::analysis::{ClusterSet, RadiusGraph, SegmentationResult};
use crate::error::{Error, Result};
use crate::stats::{ConnectivityCounts, ReliabilityReport};
use crate::synth::BenchReport;

/// Ordered key/value pairs; keys contain no whitespace.
pub type KvDoc = Vec<(String, String)>;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            None
        } else {
            Some((i + 1, t))
        }
    })
}

fn parse<T: std::str::FromStr>(line_no: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse_line(line_no, format!("bad {what} {field:?}")))
}

// -- labels -------------------------------------------------------------

/// One integer label per line; `-1` encodes "unassigned".
pub fn labels_to_string(labels: &[i64]) -> String {
    let mut out = String::with_capacity(labels.len() * 4);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn write_labels(labels: &[i64], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, labels_to_string(labels))?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(no, l)| parse(no, l, "label"))
        .collect()
}

/// `<bundle id> <name>` per line; the name is the rest of the line.
pub fn write_label_names(names: &[(u32, String)], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (id, name) in names {
        out.push_str(&format!("{id} {name}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_label_names(path: impl AsRef<Path>) -> Result<Vec<(u32, String)>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(no, l)| {
            let (id, name) = l
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse_line(no, "expected \"<id> <name>\""))?;
            Ok((parse(no, id, "bundle id")?, name.trim().to_string()))
        })
        .collect()
}

/// One hemisphere label per region, one per line.
pub fn read_hemispheres(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(no, l)| parse(no, l, "hemisphere label"))
        .collect()
}

// -- radius graph ---------------------------------------------------------

/// Header `N E radius`, then one `i j dist` triplet per undirected edge,
/// stored once with `i < j` in ascending order.
pub fn graph_to_string(graph: &RadiusGraph) -> String {
    let edges = graph.edges_upper();
    let mut out = String::with_capacity(16 + edges.len() * 24);
    out.push_str(&format!(
        "{} {} {}\n",
        graph.node_count(),
        edges.len(),
        graph.radius()
    ));
    for (i, j, d) in edges {
        out.push_str(&format!("{i} {j} {d}\n"));
    }
    out
}

pub fn write_graph(graph: &RadiusGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, graph_to_string(graph))?;
    Ok(())
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<RadiusGraph> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    let (no, header) = lines
        .next()
        .ok_or_else(|| Error::parse_line(1, "empty graph file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::parse_line(no, "expected header \"N E radius\""));
    }
    let n: usize = parse(no, fields[0], "node count")?;
    let e: usize = parse(no, fields[1], "edge count")?;
    let radius: f64 = parse(no, fields[2], "radius")?;
    let mut edges = Vec::with_capacity(e);
    for (no, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse_line(no, "expected \"i j dist\""));
        }
        let i: u32 = parse(no, f[0], "node id")?;
        let j: u32 = parse(no, f[1], "node id")?;
        let d: f64 = parse(no, f[2], "distance")?;
        if i >= j {
            return Err(Error::parse_line(no, format!("edge ({i}, {j}) not i < j")));
        }
        edges.push((i, j, d));
    }
    if edges.len() != e {
        return Err(Error::parse_line(
            1,
            format!("header declares {e} edges, found {}", edges.len()),
        ));
    }
    RadiusGraph::from_edges(n, radius, &edges)
}

// -- connectivity matrix ----------------------------------------------------

/// Header `R n`, then `i j count` triplets for the nonzero entries.
pub fn matrix_to_string(counts: &ConnectivityCounts) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", counts.regions(), counts.seeds()));
    for (i, j, c) in counts.nonzero() {
        out.push_str(&format!("{i} {j} {c}\n"));
    }
    out
}

pub fn write_connectivity_matrix(
    counts: &ConnectivityCounts,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, matrix_to_string(counts))?;
    Ok(())
}

pub fn read_connectivity_matrix(path: impl AsRef<Path>) -> Result<ConnectivityCounts> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    let (no, header) = lines
        .next()
        .ok_or_else(|| Error::parse_line(1, "empty matrix file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::parse_line(no, "expected header \"R n\""));
    }
    let r: usize = parse(no, fields[0], "region count")?;
    let n: u64 = parse(no, fields[1], "seed count")?;
    let mut triplets = Vec::new();
    for (no, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse_line(no, "expected \"i j count\""));
        }
        triplets.push((
            parse(no, f[0], "region")?,
            parse(no, f[1], "region")?,
            parse(no, f[2], "count")?,
        ));
    }
    ConnectivityCounts::from_triplets(r, n, &triplets)
}

// -- key/value documents ------------------------------------------------

pub fn kv_to_string(doc: &KvDoc) -> String {
    let mut out = String::new();
    for (k, v) in doc {
        debug_assert!(!k.contains(char::is_whitespace));
        out.push_str(&format!("{k} {v}\n"));
    }
    out
}

pub fn write_kv_doc(doc: &KvDoc, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, kv_to_string(doc))?;
    Ok(())
}

pub fn read_kv_doc(path: impl AsRef<Path>) -> Result<KvDoc> {
    let text = fs::read_to_string(path)?;
    Ok(kv_from_lines(data_lines(&text)))
}

fn kv_from_lines<'a>(lines: impl Iterator<Item = (usize, &'a str)>) -> KvDoc {
    lines
        .map(|(_, l)| match l.split_once(char::is_whitespace) {
            Some((k, v)) => (k.to_string(), v.trim().to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "undefined".to_string(),
    }
}

// -- reliability report -------------------------------------------------

/// Summary key/value block followed by an `edges <count>` table with one
/// `i j c p_hat variance ci_lo ci_hi ratio` record per entry.
pub fn reliability_report_to_string(report: &ReliabilityReport) -> String {
    let mut kv: KvDoc = vec![
        ("alpha".into(), report.alpha.to_string()),
        ("regions".into(), report.r.to_string()),
        ("seeds".into(), report.n.to_string()),
        ("entries_total".into(), report.entries_total.to_string()),
        ("zero_entries".into(), report.zero_entries.to_string()),
        ("finite_entries".into(), report.finite_entries.to_string()),
        (
            "fraction_ratio_above_1".into(),
            fmt_opt(report.fraction_ratio_above_1),
        ),
        ("median_ratio".into(), fmt_opt(report.median_ratio)),
    ];
    if let Some(medians) = &report.hemisphere_medians {
        for (h, m) in medians.iter().enumerate() {
            kv.push((format!("median_ratio_hemisphere_{h}"), fmt_opt(*m)));
        }
    }
    for (label, count) in &report.phat_histogram {
        kv.push((format!("phat_hist_{label}"), count.to_string()));
    }
    let mut out = kv_to_string(&kv);
    out.push_str(&format!("edges {}\n", report.edges.len()));
    for (i, j, e) in &report.edges {
        out.push_str(&format!(
            "{i} {j} {} {} {} {} {} {}\n",
            e.c, e.p_hat, e.variance, e.ci_lo, e.ci_hi, e.ratio
        ));
    }
    out
}

pub fn write_reliability_report(
    report: &ReliabilityReport,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, reliability_report_to_string(report))?;
    Ok(())
}

/// The parsed form of a written report: the summary pairs plus the edge
/// table records `(i, j, c, p_hat, variance, ci_lo, ci_hi, ratio)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReportFile {
    pub kv: KvDoc,
    pub edges: Vec<(u32, u32, u64, f64, f64, f64, f64, f64)>,
}

impl ReliabilityReportFile {
    pub fn value(&self, key: &str) -> Option<&str> {
        self.kv
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn read_reliability_report(path: impl AsRef<Path>) -> Result<ReliabilityReportFile> {
    let text = fs::read_to_string(path)?;
    let mut kv = KvDoc::new();
    let mut edges = Vec::new();
    let mut in_table = false;
    let mut declared = 0usize;
    for (no, l) in data_lines(&text) {
        if !in_table {
            let (k, v) = l
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .unwrap_or((l, ""));
            if k == "edges" {
                declared = parse(no, v, "edge count")?;
                in_table = true;
            } else {
                kv.push((k.to_string(), v.to_string()));
            }
        } else {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 8 {
                return Err(Error::parse_line(no, "expected 8 edge fields"));
            }
            edges.push((
                parse(no, f[0], "region")?,
                parse(no, f[1], "region")?,
                parse(no, f[2], "count")?,
                parse(no, f[3], "p_hat")?,
                parse(no, f[4], "variance")?,
                parse(no, f[5], "ci_lo")?,
                parse(no, f[6], "ci_hi")?,
                parse(no, f[7], "ratio")?,
            ));
        }
    }
    if edges.len() != declared {
        return Err(Error::parse_line(
            1,
            format!("edge table declares {declared}, found {}", edges.len()),
        ));
    }
    Ok(ReliabilityReportFile { kv, edges })
}

// -- pipeline outputs -----------------------------------------------------

/// Segmentation as a label list: the assigned bundle per query, `-1` when
/// unassigned. One line per input streamline.
pub fn segmentation_to_string(seg: &SegmentationResult) -> String {
    let labels: Vec<i64> = seg
        .assignments
        .iter()
        .map(|a| a.bundle.map(|b| b as i64).unwrap_or(-1))
        .collect();
    labels_to_string(&labels)
}

pub fn write_segmentation(seg: &SegmentationResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, segmentation_to_string(seg))?;
    Ok(())
}

/// Header `N C`, then per node: `cluster density` with `-1` for noise.
pub fn clusters_to_string(set: &ClusterSet) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", set.assignment.len(), set.clusters.len()));
    for (a, d) in set.assignment.iter().zip(&set.density) {
        let c = a.map(|c| c as i64).unwrap_or(-1);
        out.push_str(&format!("{c} {d}\n"));
    }
    out
}

pub fn write_clusters(set: &ClusterSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, clusters_to_string(set))?;
    Ok(())
}

/// Bench results as a key/value document plus a fixed-width summary table in
/// trailing comments.
pub fn bench_report_to_string(report: &BenchReport) -> String {
    let mut kv: KvDoc = vec![
        ("machine_threads".into(), report.machine_threads.to_string()),
        ("machine_os".into(), report.machine_os.clone()),
        ("entries".into(), report.entries.len().to_string()),
    ];
    for (i, e) in report.entries.iter().enumerate() {
        let p = format!("entry_{i}");
        kv.push((format!("{p}_task"), e.task.clone()));
        kv.push((format!("{p}_n"), e.n.to_string()));
        kv.push((format!("{p}_threads"), e.threads.to_string()));
        kv.push((format!("{p}_median_secs"), e.median_secs.to_string()));
        kv.push((
            format!("{p}_runs_secs"),
            e.runs_secs
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ));
        if let Some(s) = e.speedup_vs_single {
            kv.push((format!("{p}_speedup_vs_1thread"), s.to_string()));
        }
        if let Some(v) = e.visited_nodes {
            kv.push((format!("{p}_visited_nodes"), v.to_string()));
        }
    }
    let mut out = kv_to_string(&kv);
    out.push_str("#\n# task                 n        threads  median_s    speedup\n");
    for e in &report.entries {
        out.push_str(&format!(
            "# {:<20} {:<8} {:<8} {:<11.6} {}\n",
            e.task,
            e.n,
            e.threads,
            e.median_secs,
            e.speedup_vs_single
                .map(|s| format!("{s:.2}x"))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}

pub fn write_bench_report(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, bench_report_to_string(report))?;
    Ok(())
}
