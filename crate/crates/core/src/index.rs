//! Generalized k-d tree over resampled streamlines: exact KNN and radius
//! search under any supported mixed norm, with parallel batch queries.
//!
//! Streamlines are resampled to `K` points, quantized to single precision and
//! stored as rows of a flat `N x 3K` matrix. The tree itself lives in a
//! reduced space: each run of `K/G` consecutive points is averaged into one
//! of `G` coarse points, and the tree splits on the widest-spread coarse axis
//! at the midpoint of the data range (slid to the nearest data value if a
//! side would come up empty). By convexity the mixed norm of a pair is at
//! least the group-size-weighted flat outer-exponent norm of their coarse
//! difference divided by the Hölder factor `3^max(0, 1/outer - 1/inner)`, so
//! a box bound in the coarse space is a true lower bound on the mixed norm:
//! a subtree is skipped only when it provably contains no result. Working in
//! ~12 coarse dimensions instead of `3K` is what keeps the box bounds sharp
//! enough to prune. Candidate rows in leaves are evaluated with the exact
//! full-resolution mixed norm, so results are identical to a brute-force
//! scan.
//!
//! Radii and reported distances use the averaged convention when the spec
//! says so; internally everything runs un-averaged and rescales once at the
//! API boundary.

use crate::error::{Error, Result};
use crate::norm::{mixed_raw_within, Exponent, NormSpec, OrientationPolicy};
use crate::par;
use crate::streamline::{Streamline, Tractogram};

/// Build parameters for [`SearchIndex::build`].
#[derive(Debug, Clone, Copy)]
pub struct IndexParams {
    /// Resample point count; flattened dimensionality is `3 * k_points`.
    pub k_points: usize,
    pub spec: NormSpec,
    pub policy: OrientationPolicy,
    /// Max rows per leaf. Distance kernels over whole rows are cheap, so
    /// moderately large leaves beat deeper trees.
    pub leaf_capacity: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            k_points: 32,
            spec: NormSpec::l21_average(),
            policy: OrientationPolicy::DirectFlip,
            leaf_capacity: 16,
        }
    }
}

/// One search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Row index in the indexed tractogram.
    pub id: u32,
    /// Distance in the spec's reporting convention.
    pub distance: f64,
    /// Whether the flipped query orientation won (always `false` under the
    /// direct policy; ties resolve to `false`).
    pub flipped: bool,
}

/// Instrumentation counters for a query (or a batch when summed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: u64,
    pub leaves_visited: u64,
    pub distance_evals: u64,
}

impl QueryStats {
    pub fn add(&mut self, other: &QueryStats) {
        self.nodes_visited += other.nodes_visited;
        self.leaves_visited += other.leaves_visited;
        self.distance_evals += other.distance_evals;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Node {
    Split {
        axis: u32,
        value: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        len: u32,
    },
}

/// Immutable k-d tree over fixed-point-count flattened streamlines.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    rows: Vec<f32>,
    n: usize,
    dim: usize,
    k_points: usize,
    /// Coarse points per row for the tree space; divides `k_points`.
    group_count: usize,
    /// Multiplies the prune bound: `holder_scale / group_weight`.
    prune_bound_scale: f64,
    spec: NormSpec,
    policy: OrientationPolicy,
    leaf_capacity: usize,
    nodes: Vec<Node>,
    row_ids: Vec<u32>,
}

impl SearchIndex {
    /// Builds the index over `resample(s, k_points)` of every streamline.
    /// Deterministic given identical inputs and parameters, independent of
    /// worker count.
    pub fn build(tractogram: &Tractogram, params: IndexParams) -> Result<SearchIndex> {
        if tractogram.is_empty() {
            return Err(Error::EmptyTractogram);
        }
        if params.leaf_capacity < 1 {
            return Err(Error::InvalidArgument("leaf capacity must be >= 1".into()));
        }
        if params.k_points < 2 {
            return Err(Error::InvalidArgument(
                "resample count must be >= 2".into(),
            ));
        }
        let n = tractogram.len();
        let dim = 3 * params.k_points;

        let resampled: Vec<Result<Vec<f32>>> = par::map_range(n, |i| {
            tractogram.streamlines()[i]
                .resample_with_id(params.k_points, tractogram.id_of(i))
                .map(|r| r.quantize())
        });
        let mut rows = Vec::with_capacity(n * dim);
        for row in resampled {
            rows.extend(row?);
        }

        // The coarse matrix is build-time scratch: the finished tree keeps
        // only split values in coarse axes, and queries derive their own
        // coarse vector.
        let group_count = group_count_for(params.k_points);
        let coarse_dim = 3 * group_count;
        let mut coarse = Vec::with_capacity(n * coarse_dim);
        for row in rows.chunks_exact(dim) {
            coarse_of(row, params.k_points, group_count, &mut coarse);
        }

        let mut row_ids: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        nodes.push(Node::Leaf { start: 0, len: 0 }); // root placeholder
        build_node(
            &mut nodes,
            0,
            &coarse,
            coarse_dim,
            &mut row_ids,
            0,
            n,
            params.leaf_capacity,
        );

        Ok(SearchIndex {
            rows,
            n,
            dim,
            k_points: params.k_points,
            group_count,
            prune_bound_scale: prune_bound_scale(&params.spec, params.k_points, group_count),
            spec: params.spec,
            policy: params.policy,
            leaf_capacity: params.leaf_capacity,
            nodes,
            row_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k_points(&self) -> usize {
        self.k_points
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn policy(&self) -> OrientationPolicy {
        self.policy
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        fn depth(nodes: &[Node], i: u32) -> usize {
            match nodes[i as usize] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + depth(nodes, left).max(depth(nodes, right))
                }
            }
        }
        depth(&self.nodes, 0)
    }

    #[inline]
    fn row(&self, id: u32) -> &[f32] {
        let s = id as usize * self.dim;
        &self.rows[s..s + self.dim]
    }

    /// The stored (resampled, quantized) form of row `id`.
    pub fn resampled_row(&self, id: u32) -> crate::streamline::ResampledStreamline {
        let flat: Vec<f64> = self.row(id).iter().map(|&v| v as f64).collect();
        crate::streamline::ResampledStreamline::from_flat(flat)
            .expect("stored rows are valid by construction")
    }

    fn quantized_query(&self, query: &Streamline) -> Result<Vec<f32>> {
        Ok(query.resample(self.k_points)?.quantize())
    }

    /// Exactly `min(k, N)` nearest rows, sorted by ascending distance with
    /// ties broken by ascending id. Identical as a set to a brute-force scan.
    pub fn knn(&self, query: &Streamline, k: usize) -> Result<Vec<Neighbor>> {
        Ok(self.knn_with_stats(query, k)?.0)
    }

    pub fn knn_with_stats(
        &self,
        query: &Streamline,
        k: usize,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let q = self.quantized_query(query)?;
        let mut stats = QueryStats::default();
        let out = match self.policy {
            OrientationPolicy::Direct => {
                let hits = self.knn_raw(&q, k, &mut stats);
                self.report(hits.into_iter().map(|(d, id)| (d, id, false)).collect(), None)
            }
            OrientationPolicy::DirectFlip => {
                let direct = self.knn_raw(&q, k, &mut stats);
                let rev = reverse_flat(&q);
                let flipped = self.knn_raw(&rev, k, &mut stats);
                self.report(merge_flip(direct, flipped), Some(k))
            }
        };
        Ok((out, stats))
    }

    /// Exactly the rows within distance `r` of the query (inclusive), sorted
    /// by ascending distance then id.
    pub fn radius_search(&self, query: &Streamline, r: f64) -> Result<Vec<Neighbor>> {
        Ok(self.radius_search_with_stats(query, r)?.0)
    }

    pub fn radius_search_with_stats(
        &self,
        query: &Streamline,
        r: f64,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be >= 0, got {r}"
            )));
        }
        let q = self.quantized_query(query)?;
        Ok(self.radius_quantized(&q, r, None))
    }

    /// Radius query taking a stored row as the query; `exclude` drops the row
    /// itself. Used for self-adjacency so the query bits match the stored
    /// data exactly.
    pub(crate) fn radius_search_row(&self, row: u32, r: f64) -> (Vec<Neighbor>, QueryStats) {
        let q: Vec<f32> = self.row(row).to_vec();
        self.radius_quantized(&q, r, Some(row))
    }

    fn radius_quantized(
        &self,
        q: &[f32],
        r: f64,
        exclude: Option<u32>,
    ) -> (Vec<Neighbor>, QueryStats) {
        // Convert the reporting-convention radius to internal un-averaged
        // units once at entry.
        let r_int = r * self.spec.outer_scale(self.k_points);
        let mut stats = QueryStats::default();
        let hits = match self.policy {
            OrientationPolicy::Direct => {
                let hits = self.radius_raw(q, r_int, &mut stats);
                hits.into_iter().map(|(d, id)| (d, id, false)).collect()
            }
            OrientationPolicy::DirectFlip => {
                let direct = self.radius_raw(q, r_int, &mut stats);
                let rev = reverse_flat(q);
                let flipped = self.radius_raw(&rev, r_int, &mut stats);
                merge_flip(direct, flipped)
            }
        };
        let mut out = self.report(hits, None);
        if let Some(ex) = exclude {
            out.retain(|n| n.id != ex);
        }
        (out, stats)
    }

    /// Converts raw (un-averaged) hits to reporting convention, sorts by
    /// (distance, id) and optionally truncates.
    fn report(&self, mut hits: Vec<(f64, u32, bool)>, k: Option<usize>) -> Vec<Neighbor> {
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some(k) = k {
            hits.truncate(k);
        }
        let scale = self.spec.outer_scale(self.k_points);
        hits.into_iter()
            .map(|(d, id, flipped)| Neighbor {
                id,
                distance: d / scale,
                flipped,
            })
            .collect()
    }

    /// Batch form: element `i` equals the single-query result for query `i`,
    /// bit for bit, regardless of worker count.
    pub fn batch_knn(&self, queries: &Tractogram, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        Ok(self.batch_knn_with_stats(queries, k)?.0)
    }

    pub fn batch_knn_with_stats(
        &self,
        queries: &Tractogram,
        k: usize,
    ) -> Result<(Vec<Vec<Neighbor>>, QueryStats)> {
        let results = par::map_range(queries.len(), |i| {
            self.knn_with_stats(&queries.streamlines()[i], k)
        });
        collect_batch(results)
    }

    pub fn batch_radius(&self, queries: &Tractogram, r: f64) -> Result<Vec<Vec<Neighbor>>> {
        let results = par::map_range(queries.len(), |i| {
            self.radius_search_with_stats(&queries.streamlines()[i], r)
        });
        Ok(collect_batch(results)?.0)
    }

    // -- tree descent -------------------------------------------------------

    fn knn_raw(&self, q: &[f32], k: usize, stats: &mut QueryStats) -> Vec<(f64, u32)> {
        let m = self.spec.prune_exponent();
        let mut heap = BoundedHeap::new(k, m, self.prune_bound_scale);
        let mut qc = Vec::with_capacity(3 * self.group_count);
        coarse_of(q, self.k_points, self.group_count, &mut qc);
        let mut offs = vec![0.0f64; if m == Exponent::Inf { 0 } else { qc.len() }];
        self.knn_recurse(0, 0.0, &mut offs, q, &qc, &mut heap, stats);
        heap.into_sorted()
    }

    #[allow(clippy::too_many_arguments)]
    fn knn_recurse(
        &self,
        node: u32,
        acc: f64,
        offs: &mut [f64],
        q: &[f32],
        qc: &[f64],
        heap: &mut BoundedHeap,
        stats: &mut QueryStats,
    ) {
        stats.nodes_visited += 1;
        match self.nodes[node as usize] {
            Node::Leaf { start, len } => {
                stats.leaves_visited += 1;
                for &id in &self.row_ids[start as usize..(start + len) as usize] {
                    stats.distance_evals += 1;
                    if let Some(d) = mixed_raw_within(
                        q,
                        self.row(id),
                        self.spec.inner,
                        self.spec.outer,
                        heap.bound(),
                    ) {
                        heap.insert(d, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let qa = qc[axis as usize];
                let (near, far) = if qa <= value {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_recurse(near, acc, offs, q, qc, heap, stats);
                let off = (qa - value).abs();
                let (new_acc, saved) = advance(acc, offs, axis as usize, off, heap.m);
                if new_acc <= heap.bound_pow() {
                    self.knn_recurse(far, new_acc, offs, q, qc, heap, stats);
                }
                retreat(offs, axis as usize, saved, heap.m);
            }
        }
    }

    fn radius_raw(&self, q: &[f32], r_int: f64, stats: &mut QueryStats) -> Vec<(f64, u32)> {
        let m = self.spec.prune_exponent();
        let r_pow = pow_m(r_int * self.prune_bound_scale, m);
        let mut qc = Vec::with_capacity(3 * self.group_count);
        coarse_of(q, self.k_points, self.group_count, &mut qc);
        let mut offs = vec![0.0f64; if m == Exponent::Inf { 0 } else { qc.len() }];
        let mut hits = Vec::new();
        self.radius_recurse(0, 0.0, &mut offs, q, &qc, r_int, r_pow, m, &mut hits, stats);
        hits
    }

    #[allow(clippy::too_many_arguments)]
    fn radius_recurse(
        &self,
        node: u32,
        acc: f64,
        offs: &mut [f64],
        q: &[f32],
        qc: &[f64],
        r_int: f64,
        r_pow: f64,
        m: Exponent,
        hits: &mut Vec<(f64, u32)>,
        stats: &mut QueryStats,
    ) {
        stats.nodes_visited += 1;
        match self.nodes[node as usize] {
            Node::Leaf { start, len } => {
                stats.leaves_visited += 1;
                for &id in &self.row_ids[start as usize..(start + len) as usize] {
                    stats.distance_evals += 1;
                    if let Some(d) =
                        mixed_raw_within(q, self.row(id), self.spec.inner, self.spec.outer, r_int)
                    {
                        // The kernel's early-abandon slack can let a value
                        // slightly above the bound through; the inclusive
                        // radius predicate is enforced here.
                        if d <= r_int {
                            hits.push((d, id));
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let qa = qc[axis as usize];
                let (near, far) = if qa <= value {
                    (left, right)
                } else {
                    (right, left)
                };
                self.radius_recurse(near, acc, offs, q, qc, r_int, r_pow, m, hits, stats);
                let off = (qa - value).abs();
                let (new_acc, saved) = advance(acc, offs, axis as usize, off, m);
                if new_acc <= r_pow {
                    self.radius_recurse(far, new_acc, offs, q, qc, r_int, r_pow, m, hits, stats);
                }
                retreat(offs, axis as usize, saved, m);
            }
        }
    }

    // -- snapshot support ---------------------------------------------------

    pub(crate) fn raw_parts(&self) -> (&[f32], &[Node], &[u32]) {
        (&self.rows, &self.nodes, &self.row_ids)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_raw_parts(
        rows: Vec<f32>,
        k_points: usize,
        spec: NormSpec,
        policy: OrientationPolicy,
        leaf_capacity: usize,
        nodes: Vec<Node>,
        row_ids: Vec<u32>,
    ) -> Result<SearchIndex> {
        let dim = 3 * k_points;
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::SnapshotCorrupt("row data shape mismatch".into()));
        }
        let n = rows.len() / dim;
        if row_ids.len() != n || nodes.is_empty() {
            return Err(Error::SnapshotCorrupt("node/row count mismatch".into()));
        }
        let group_count = group_count_for(k_points);
        for node in &nodes {
            match *node {
                Node::Split {
                    axis, left, right, ..
                } => {
                    if axis as usize >= 3 * group_count
                        || left as usize >= nodes.len()
                        || right as usize >= nodes.len()
                    {
                        return Err(Error::SnapshotCorrupt("node reference out of range".into()));
                    }
                }
                Node::Leaf { start, len } => {
                    if (start as usize) + (len as usize) > n {
                        return Err(Error::SnapshotCorrupt("leaf bucket out of range".into()));
                    }
                }
            }
        }
        Ok(SearchIndex {
            rows,
            n,
            dim,
            k_points,
            group_count,
            prune_bound_scale: prune_bound_scale(&spec, k_points, group_count),
            spec,
            policy,
            leaf_capacity,
            nodes,
            row_ids,
        })
    }
}

fn collect_batch<T>(results: Vec<Result<(T, QueryStats)>>) -> Result<(Vec<T>, QueryStats)> {
    let mut out = Vec::with_capacity(results.len());
    let mut total = QueryStats::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((v, s)) => {
                total.add(&s);
                out.push(v);
            }
            Err(e) => {
                return Err(Error::QueryFailed {
                    index: i,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((out, total))
}

/// Coarse points per row: the largest divisor of `k_points` no greater than
/// 4, so the tree space stays around 12 dimensions.
fn group_count_for(k_points: usize) -> usize {
    (1..=4.min(k_points))
        .rev()
        .find(|g| k_points % g == 0)
        .unwrap_or(1)
}

/// Appends the group means of one full-resolution row.
fn coarse_of(row: &[f32], k_points: usize, group_count: usize, out: &mut Vec<f64>) {
    let per = k_points / group_count;
    let inv = 1.0 / per as f64;
    for g in 0..group_count {
        let mut acc = [0.0f64; 3];
        for k in g * per..(g + 1) * per {
            acc[0] += row[3 * k] as f64;
            acc[1] += row[3 * k + 1] as f64;
            acc[2] += row[3 * k + 2] as f64;
        }
        out.push(acc[0] * inv);
        out.push(acc[1] * inv);
        out.push(acc[2] * inv);
    }
}

/// Search bounds are multiplied by this before comparison against coarse box
/// distances: `holder / weight` where `weight` is the group-size factor the
/// convexity bound earns (`K/G` for outer 1, `sqrt(K/G)` for outer 2, 1 for
/// outer inf) and `holder = 3^max(0, 1/outer - 1/inner)`.
fn prune_bound_scale(spec: &NormSpec, k_points: usize, group_count: usize) -> f64 {
    let per = (k_points / group_count) as f64;
    let weight = match spec.outer {
        Exponent::One => per,
        Exponent::Two => per.sqrt(),
        Exponent::Inf => 1.0,
    };
    spec.prune_scale() / weight
}

/// Updates the incremental box bound when stepping to the far child across
/// the splitting plane on `axis`. Per-axis offsets only grow along a descent
/// (boxes nest), so for the max norm a running maximum is enough.
#[inline]
fn advance(acc: f64, offs: &mut [f64], axis: usize, off: f64, m: Exponent) -> (f64, f64) {
    match m {
        Exponent::One => {
            let saved = offs[axis];
            offs[axis] = off;
            (acc - saved + off, saved)
        }
        Exponent::Two => {
            let saved = offs[axis];
            let c = off * off;
            offs[axis] = c;
            (acc - saved + c, saved)
        }
        Exponent::Inf => (acc.max(off), 0.0),
    }
}

#[inline]
fn retreat(offs: &mut [f64], axis: usize, saved: f64, m: Exponent) {
    if m != Exponent::Inf {
        offs[axis] = saved;
    }
}

#[inline]
fn pow_m(v: f64, m: Exponent) -> f64 {
    match m {
        Exponent::One | Exponent::Inf => v,
        Exponent::Two => v * v,
    }
}

pub(crate) fn reverse_flat(q: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(q.len());
    for chunk in q.chunks_exact(3).rev() {
        out.extend_from_slice(chunk);
    }
    out
}

/// Merges hits from the direct and reversed query orientations, deduping by
/// id with the minimum distance; ties keep the direct orientation.
fn merge_flip(direct: Vec<(f64, u32)>, flipped: Vec<(f64, u32)>) -> Vec<(f64, u32, bool)> {
    let mut a = direct;
    let mut b = flipped;
    a.sort_by_key(|&(_, id)| id);
    b.sort_by_key(|&(_, id)| id);
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].1 < b[j].1) {
            out.push((a[i].0, a[i].1, false));
            i += 1;
        } else if i >= a.len() || b[j].1 < a[i].1 {
            out.push((b[j].0, b[j].1, true));
            j += 1;
        } else {
            let (d0, id) = a[i];
            let d1 = b[j].0;
            if d1 < d0 {
                out.push((d1, id, true));
            } else {
                out.push((d0, id, false));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

// -- bounded max-heap for KNN ------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Entry {
    d: f64,
    id: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.d.total_cmp(&other.d) == std::cmp::Ordering::Equal && self.id == other.id
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d.total_cmp(&other.d).then(self.id.cmp(&other.id))
    }
}

struct BoundedHeap {
    k: usize,
    m: Exponent,
    scale: f64,
    heap: std::collections::BinaryHeap<Entry>,
    bound: f64,
    bound_pow: f64,
}

impl BoundedHeap {
    fn new(k: usize, m: Exponent, scale: f64) -> Self {
        BoundedHeap {
            k,
            m,
            scale,
            heap: std::collections::BinaryHeap::with_capacity(k + 1),
            bound: f64::INFINITY,
            bound_pow: f64::INFINITY,
        }
    }

    /// Current worst acceptable raw distance (infinite until full).
    #[inline]
    fn bound(&self) -> f64 {
        self.bound
    }

    /// The Hölder-scaled bound in the prune exponent's power domain; box
    /// accumulators compare against this.
    #[inline]
    fn bound_pow(&self) -> f64 {
        self.bound_pow
    }

    #[inline]
    fn insert(&mut self, d: f64, id: u32) {
        let e = Entry { d, id };
        if self.heap.len() < self.k {
            self.heap.push(e);
            if self.heap.len() == self.k {
                self.refresh_bound();
            }
        } else if let Some(top) = self.heap.peek() {
            if e < *top {
                self.heap.pop();
                self.heap.push(e);
                self.refresh_bound();
            }
        }
    }

    fn refresh_bound(&mut self) {
        if let Some(top) = self.heap.peek() {
            self.bound = top.d;
            self.bound_pow = pow_m(top.d * self.scale, self.m);
        }
    }

    fn into_sorted(self) -> Vec<(f64, u32)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| (e.d, e.id))
            .collect()
    }
}

// -- tree construction -------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn build_node(
    nodes: &mut Vec<Node>,
    node_idx: usize,
    rows: &[f64],
    dim: usize,
    perm: &mut [u32],
    start: usize,
    len: usize,
    cap: usize,
) {
    if len <= cap {
        nodes[node_idx] = Node::Leaf {
            start: start as u32,
            len: len as u32,
        };
        return;
    }
    let slice = &perm[start..start + len];

    // Data bounding box over the node's rows.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &id in slice {
        let row = &rows[id as usize * dim..(id as usize + 1) * dim];
        for (a, &v) in row.iter().enumerate() {
            if v < lo[a] {
                lo[a] = v;
            }
            if v > hi[a] {
                hi[a] = v;
            }
        }
    }
    let mut axis = 0usize;
    let mut width = 0.0f64;
    for a in 0..dim {
        let w = hi[a] - lo[a];
        if w > width {
            width = w;
            axis = a;
        }
    }
    if width <= 0.0 {
        // All rows identical; cannot split.
        nodes[node_idx] = Node::Leaf {
            start: start as u32,
            len: len as u32,
        };
        return;
    }

    let mut split = 0.5 * (lo[axis] + hi[axis]);
    let coord = |id: u32| rows[id as usize * dim + axis];
    let mut left: Vec<u32> = Vec::with_capacity(len);
    let mut right: Vec<u32> = Vec::with_capacity(len);
    for &id in slice {
        if coord(id) <= split {
            left.push(id);
        } else {
            right.push(id);
        }
    }
    // Sliding-midpoint fallback: the f64 midpoint is essentially always
    // strictly inside (lo, hi), but keep the slide for robustness.
    if right.is_empty() {
        split = hi[axis];
        left.clear();
        right.clear();
        for &id in slice {
            if coord(id) < split {
                left.push(id);
            } else {
                right.push(id);
            }
        }
    } else if left.is_empty() {
        split = lo[axis];
        left.clear();
        right.clear();
        for &id in slice {
            if coord(id) <= split {
                left.push(id);
            } else {
                right.push(id);
            }
        }
    }
    debug_assert!(!left.is_empty() && !right.is_empty());

    let n_left = left.len();
    perm[start..start + n_left].copy_from_slice(&left);
    perm[start + n_left..start + len].copy_from_slice(&right);

    let left_idx = nodes.len();
    nodes.push(Node::Leaf { start: 0, len: 0 });
    let right_idx = nodes.len();
    nodes.push(Node::Leaf { start: 0, len: 0 });
    nodes[node_idx] = Node::Split {
        axis: axis as u32,
        value: split,
        left: left_idx as u32,
        right: right_idx as u32,
    };
    build_node(nodes, left_idx, rows, dim, perm, start, n_left, cap);
    build_node(nodes, right_idx, rows, dim, perm, start + n_left, len - n_left, cap);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamline::Streamline;

    fn line(points: &[[f64; 3]]) -> Streamline {
        Streamline::new(points.to_vec()).unwrap()
    }

    fn tiny_tractogram() -> Tractogram {
        let mut t = Tractogram::default();
        for i in 0..8 {
            let x = i as f64 * 10.0;
            t.push(line(&[[x, 0.0, 0.0], [x, 10.0, 0.0], [x, 20.0, 0.0]]));
        }
        t
    }

    #[test]
    fn single_streamline_is_single_leaf() {
        let t = Tractogram::new(vec![line(&[[0.0; 3], [1.0, 0.0, 0.0]])]);
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        assert_eq!(idx.node_count(), 1);
        assert_eq!(idx.leaf_count(), 1);
        assert_eq!(idx.height(), 0);
    }

    #[test]
    fn n_equal_capacity_does_not_split() {
        let t = tiny_tractogram();
        let params = IndexParams {
            leaf_capacity: t.len(),
            ..IndexParams::default()
        };
        let idx = SearchIndex::build(&t, params).unwrap();
        assert_eq!(idx.node_count(), 1);
        let params = IndexParams {
            leaf_capacity: t.len() - 1,
            ..IndexParams::default()
        };
        let idx = SearchIndex::build(&t, params).unwrap();
        assert!(idx.node_count() > 1);
    }

    #[test]
    fn empty_tractogram_rejected() {
        let t = Tractogram::default();
        assert!(matches!(
            SearchIndex::build(&t, IndexParams::default()),
            Err(Error::EmptyTractogram)
        ));
    }

    #[test]
    fn degenerate_streamline_error_names_id() {
        let mut t = Tractogram::default();
        t.push(line(&[[0.0; 3], [1.0, 0.0, 0.0]]));
        t.push(Streamline::new(vec![[5.0; 3], [5.0; 3]]).unwrap());
        let err = SearchIndex::build(&t, IndexParams::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroArcLength { id: 1 }));
    }

    #[test]
    fn self_query_returns_zero_distance() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let hits = idx.knn(&t.streamlines()[3], 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, 3);
        assert_eq!(hits[0].distance, 0.0);
        assert!(!hits[0].flipped);
    }

    #[test]
    fn k_at_least_n_returns_all_sorted() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let hits = idx.knn(&t.streamlines()[0], 100).unwrap();
        assert_eq!(hits.len(), t.len());
        for w in hits.windows(2) {
            assert!(w[0].distance <= w[1].distance);
        }
        // Streamlines are 10mm apart in x: distances are 0, 10, 20, ...
        for (rank, h) in hits.iter().enumerate() {
            assert!((h.distance - 10.0 * rank as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn radius_zero_matches_exact_row() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let hits = idx.radius_search(&t.streamlines()[2], 0.0).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, 2);
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn radius_below_min_distance_is_empty() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let far = line(&[[500.0, 0.0, 0.0], [500.0, 20.0, 0.0]]);
        assert!(idx.radius_search(&far, 8.0).unwrap().is_empty());
    }

    #[test]
    fn flip_policy_finds_reversed_rows() {
        let mut t = Tractogram::default();
        t.push(line(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [20.0, 0.0, 0.0]]));
        t.push(line(&[[120.0, 5.0, 0.0], [110.0, 5.0, 0.0], [100.0, 5.0, 0.0]]));
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        // Query matches row 1 reversed.
        let q = line(&[[100.0, 5.0, 0.0], [110.0, 5.0, 0.0], [120.0, 5.0, 0.0]]);
        let hits = idx.knn(&q, 1).unwrap();
        assert_eq!(hits[0].id, 1);
        assert!(hits[0].distance < 1e-5);
        assert!(hits[0].flipped);
    }

    #[test]
    fn rebuild_is_structurally_identical() {
        let t = tiny_tractogram();
        let a = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let b = SearchIndex::build(&t, IndexParams::default()).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.row_ids, b.row_ids);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn batch_equals_single_calls() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        let batch = idx.batch_knn(&t, 3).unwrap();
        for (i, q) in t.iter().enumerate() {
            assert_eq!(batch[i], idx.knn(q, 3).unwrap());
        }
        let batch = idx.batch_radius(&t, 15.0).unwrap();
        for (i, q) in t.iter().enumerate() {
            assert_eq!(batch[i], idx.radius_search(q, 15.0).unwrap());
        }
    }

    #[test]
    fn invalid_query_args_rejected() {
        let t = tiny_tractogram();
        let idx = SearchIndex::build(&t, IndexParams::default()).unwrap();
        assert!(idx.knn(&t.streamlines()[0], 0).is_err());
        assert!(idx.radius_search(&t.streamlines()[0], -1.0).is_err());
        assert!(idx.radius_search(&t.streamlines()[0], f64::NAN).is_err());
    }
}
