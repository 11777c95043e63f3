//! Downstream tractography analyses on top of the search index:
//! nearest-atlas bundle segmentation, radius-neighborhood graphs, local
//! density, connected-component clustering and mean streamlines.

use crate::error::{Error, Result};
use crate::index::SearchIndex;
use crate::norm::{mixed_norm_distance, NormSpec};
use crate::par;
use crate::streamline::{ResampledStreamline, Tractogram};

/// A labeled reference tractogram: every streamline carries a bundle id,
/// ids dense from 0; optional human-readable names per bundle.
#[derive(Debug, Clone)]
pub struct BundleAtlas {
    tractogram: Tractogram,
    labels: Vec<u32>,
    names: Option<Vec<String>>,
}

impl BundleAtlas {
    pub fn new(
        tractogram: Tractogram,
        labels: Vec<u32>,
        names: Option<Vec<String>>,
    ) -> Result<BundleAtlas> {
        if labels.len() != tractogram.len() {
            return Err(Error::LabelCountMismatch {
                labels: labels.len(),
                streamlines: tractogram.len(),
            });
        }
        if tractogram.is_empty() {
            return Err(Error::EmptyTractogram);
        }
        let max = *labels.iter().max().unwrap();
        let mut seen = vec![false; max as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::SparseLabels(missing as u32));
        }
        if let Some(names) = &names {
            if names.len() != max as usize + 1 {
                return Err(Error::InvalidArgument(format!(
                    "{} names for {} bundles",
                    names.len(),
                    max + 1
                )));
            }
        }
        Ok(BundleAtlas {
            tractogram,
            labels,
            names,
        })
    }

    pub fn tractogram(&self) -> &Tractogram {
        &self.tractogram
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn bundle_count(&self) -> usize {
        *self.labels.iter().max().unwrap() as usize + 1
    }

    pub fn name(&self, bundle: u32) -> Option<&str> {
        self.names.as_ref().map(|n| n[bundle as usize].as_str())
    }
}

/// Per-query outcome of nearest-atlas segmentation. `bundle` is `None` when
/// the nearest atlas streamline is farther than the gate radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub bundle: Option<u32>,
    pub distance: f64,
    pub nearest_atlas_id: u32,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub assignments: Vec<Assignment>,
}

impl SegmentationResult {
    pub fn assigned_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.bundle.is_some()).count()
    }
}

/// Labels each query with the bundle of its single nearest atlas streamline
/// when that distance is within `r_max`. The atlas index is normally built
/// with the direct-flip policy so query orientation cannot break assignment.
pub fn segment_to_atlas(
    atlas_index: &SearchIndex,
    atlas: &BundleAtlas,
    queries: &Tractogram,
    r_max: f64,
) -> Result<SegmentationResult> {
    if atlas_index.len() != atlas.tractogram().len() {
        return Err(Error::InvalidArgument(format!(
            "index over {} rows but atlas has {} streamlines",
            atlas_index.len(),
            atlas.tractogram().len()
        )));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "r_max must be > 0, got {r_max}"
        )));
    }
    let nearest = atlas_index.batch_knn(queries, 1)?;
    let assignments = nearest
        .into_iter()
        .map(|hits| {
            let n = hits[0];
            Assignment {
                bundle: (n.distance <= r_max).then(|| atlas.labels()[n.id as usize]),
                distance: n.distance,
                nearest_atlas_id: n.id,
            }
        })
        .collect();
    Ok(SegmentationResult { assignments })
}

/// Sparse symmetric radius graph in compressed sparse rows; self-edges
/// excluded, exact duplicate pairs kept at distance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusGraph {
    n: usize,
    radius: f64,
    offsets: Vec<usize>,
    /// (neighbor id, distance), each row sorted by neighbor id.
    adjacency: Vec<(u32, f64)>,
}

impl RadiusGraph {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[(u32, f64)] {
        &self.adjacency[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Undirected edges stored once with `i < j`, ascending.
    pub fn edges_upper(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for &(j, d) in self.neighbors(i) {
                if (j as usize) > i {
                    out.push((i as u32, j, d));
                }
            }
        }
        out
    }

    /// Rebuilds the CSR form from once-stored undirected edges.
    pub fn from_edges(n: usize, radius: f64, edges: &[(u32, u32, f64)]) -> Result<RadiusGraph> {
        let mut degree = vec![0usize; n];
        for &(i, j, _) in edges {
            if i as usize >= n || j as usize >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self edge on node {i}")));
            }
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut adjacency = vec![(0u32, 0.0f64); offsets[n]];
        let mut cursor = offsets.clone();
        for &(i, j, d) in edges {
            adjacency[cursor[i as usize]] = (j, d);
            cursor[i as usize] += 1;
            adjacency[cursor[j as usize]] = (i, d);
            cursor[j as usize] += 1;
        }
        for v in 0..n {
            adjacency[offsets[v]..offsets[v + 1]].sort_by_key(|&(j, _)| j);
        }
        Ok(RadiusGraph {
            n,
            radius,
            offsets,
            adjacency,
        })
    }
}

/// Builds the exact radius graph of the indexed dataset: one radius query per
/// node (parallel over nodes), each undirected edge evaluated once as `i < j`
/// and then mirrored.
pub fn build_radius_graph(index: &SearchIndex, r: f64) -> Result<RadiusGraph> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "graph radius must be > 0, got {r}"
        )));
    }
    let n = index.len();
    let upper: Vec<Vec<(u32, f64)>> = par::map_range(n, |i| {
        let (hits, _) = index.radius_search_row(i as u32, r);
        hits.into_iter()
            .filter(|h| (h.id as usize) > i)
            .map(|h| (h.id, h.distance))
            .collect()
    });
    let mut edges = Vec::new();
    for (i, row) in upper.iter().enumerate() {
        for &(j, d) in row {
            edges.push((i as u32, j, d));
        }
    }
    RadiusGraph::from_edges(n, r, &edges)
}

/// Per-node neighbor counts (the graph's degrees).
pub fn local_density(graph: &RadiusGraph) -> Vec<usize> {
    (0..graph.node_count()).map(|i| graph.degree(i)).collect()
}

/// Sentinel-free cluster assignment: `None` is noise.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub assignment: Vec<Option<u32>>,
    /// Member lists per cluster id, ascending node order.
    pub clusters: Vec<Vec<u32>>,
    /// Orientation-aligned point-wise mean per cluster.
    pub centroids: Vec<ResampledStreamline>,
    /// Raw degree per node.
    pub density: Vec<usize>,
}

impl ClusterSet {
    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }
}

/// Clusters = connected components of the radius graph; components smaller
/// than `min_size` become noise. Cluster ids are assigned by descending size,
/// ties by ascending smallest member id, so the labeling is deterministic and
/// order-independent.
pub fn cluster(
    graph: &RadiusGraph,
    min_size: usize,
    index: &SearchIndex,
) -> Result<ClusterSet> {
    if min_size < 1 {
        return Err(Error::InvalidArgument("min_size must be >= 1".into()));
    }
    if index.len() != graph.node_count() {
        return Err(Error::InvalidArgument(format!(
            "graph over {} nodes but index has {} rows",
            graph.node_count(),
            index.len()
        )));
    }
    let n = graph.node_count();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for &(j, _) in graph.neighbors(i) {
            uf.union(i, j as usize);
        }
    }
    let mut members: std::collections::BTreeMap<usize, Vec<u32>> = std::collections::BTreeMap::new();
    for i in 0..n {
        members.entry(uf.find(i)).or_default().push(i as u32);
    }
    let mut comps: Vec<Vec<u32>> = members
        .into_values()
        .filter(|m| m.len() >= min_size)
        .collect();
    // Descending size, then ascending smallest member (lists are ascending).
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    let mut assignment = vec![None; n];
    for (cid, comp) in comps.iter().enumerate() {
        for &node in comp {
            assignment[node as usize] = Some(cid as u32);
        }
    }
    let centroids = comps
        .iter()
        .map(|comp| {
            let members: Vec<ResampledStreamline> =
                comp.iter().map(|&i| index.resampled_row(i)).collect();
            mean_streamline(&members, index.spec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterSet {
        assignment,
        clusters: comps,
        centroids,
        density: local_density(graph),
    })
}

/// Orientation-aligned point-wise mean: every member is flipped (or not) to
/// minimize its direct distance to the first member, then points are
/// averaged index-wise.
pub fn mean_streamline(
    members: &[ResampledStreamline],
    spec: &NormSpec,
) -> Result<ResampledStreamline> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean of empty member list".into()))?;
    let k = first.k();
    let mut acc = vec![0.0f64; 3 * k];
    for m in members {
        let direct = mixed_norm_distance(first, m, spec)?;
        let rev = m.reverse();
        let flipped = mixed_norm_distance(first, &rev, spec)?;
        let aligned = if flipped < direct { &rev } else { m };
        for (a, v) in acc.iter_mut().zip(aligned.flat()) {
            *a += v;
        }
    }
    let inv = 1.0 / members.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    ResampledStreamline::from_flat(acc)
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
    }
}
