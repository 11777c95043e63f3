//! Streamline geometry: polyline types, arc-length resampling and
//! orientation handling.
//!
//! A [`Streamline`] is an ordered 3D polyline in world millimeters. For
//! indexing and distance computation it is resampled to a fixed point count
//! ([`ResampledStreamline`]), giving every streamline the same flattened
//! dimensionality. Geometry is kept in `f64`; the single-precision
//! quantization used by the on-disk formats and the search index happens
//! through [`ResampledStreamline::quantize`].

use crate::error::{Error, Result};

/// One 3D point, world millimeters.
pub type Point = [f64; 3];

#[inline]
fn dist3(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// An ordered 3D polyline with at least two points and finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    points: Vec<Point>,
}

impl Streamline {
    /// Validates point count and finiteness. Consecutive duplicate points are
    /// permitted; they are collapsed later during arc-length parameterization.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        Self::with_id(points, 0)
    }

    /// Same as [`Streamline::new`] but reports `id` in error messages.
    pub fn with_id(points: Vec<Point>, id: u64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints(points.len()));
        }
        for (k, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteCoordinate { id, point: k });
            }
        }
        Ok(Streamline { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor guarantees >= 2 points
    }

    /// Sum of Euclidean lengths of consecutive segments.
    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| dist3(&w[0], &w[1]))
            .sum()
    }

    /// Resamples to `k` points with uniform spacing: all k-1 consecutive
    /// point distances equal, every point on the source polyline, endpoints
    /// preserved exactly.
    ///
    /// The common chord length is found by bisection (the walk end position
    /// is monotone in the chord length), which makes the operation a fixed
    /// point: resampling an already-resampled streamline reproduces it to
    /// within bisection tolerance. Zero-length segments (consecutive
    /// duplicates) are collapsed; a streamline whose total arc length is zero
    /// is rejected rather than silently fixed.
    pub fn resample(&self, k: usize) -> Result<ResampledStreamline> {
        self.resample_with_id(k, 0)
    }

    pub(crate) fn resample_with_id(&self, k: usize, id: u64) -> Result<ResampledStreamline> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "resample count must be >= 2, got {k}"
            )));
        }
        // Collapse duplicate consecutive points.
        let mut verts: Vec<Point> = Vec::with_capacity(self.points.len());
        verts.push(self.points[0]);
        let mut total = 0.0;
        for p in &self.points[1..] {
            let seg = dist3(verts.last().unwrap(), p);
            if seg > 0.0 {
                total += seg;
                verts.push(*p);
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroArcLength { id });
        }
        let start = verts[0];
        let end = *verts.last().unwrap();

        let mut flat = Vec::with_capacity(3 * k);
        flat.extend_from_slice(&start);
        if k > 2 {
            // Bisect the chord length c: k-2 chord steps from the start must
            // leave the last interior point exactly c short of the endpoint.
            // Chord steps advance arc by at least c, so at c = L/(k-1) the
            // walk overshoots (gap <= c) while c -> 0 undershoots.
            let steps = k - 2;
            let mut lo = 0.0f64;
            let mut hi = total / (k - 1) as f64;
            // Two reused buffers: the trial walk and the last good one. The
            // resample sits on the hot path of every batch query, so the
            // bisection must not allocate per trial.
            let mut cur: Vec<Point> = Vec::with_capacity(steps + 1);
            let mut good: Vec<Point> = Vec::new();
            for _ in 0..90 {
                let c = 0.5 * (lo + hi);
                if chord_walk_into(&verts, c, steps, &mut cur) {
                    let gap = dist3(cur.last().unwrap(), &end);
                    if gap > c {
                        lo = c;
                    } else {
                        hi = c;
                    }
                    std::mem::swap(&mut cur, &mut good);
                } else {
                    // Ran off the polyline: chord too long.
                    hi = c;
                }
                if hi - lo <= hi * 1e-16 {
                    break;
                }
            }
            if chord_walk_into(&verts, 0.5 * (lo + hi), steps, &mut cur) {
                std::mem::swap(&mut cur, &mut good);
            } else if good.is_empty() {
                // Hairpin geometry can defeat the chord walk; equal-arc
                // placement still yields k valid points on the polyline.
                good = arc_walk(&verts, total, steps);
            }
            for p in &good[1..] {
                flat.extend_from_slice(p);
            }
        }
        flat.extend_from_slice(&end);
        Ok(ResampledStreamline { k, flat })
    }
}

/// Walks the polyline placing `steps` successive points, each at straight
/// chord distance exactly `c` from the previous one, starting at the first
/// vertex. Fills `out` with the start plus the placed points; returns false
/// when the polyline ends before all steps are placed.
fn chord_walk_into(verts: &[Point], c: f64, steps: usize, out: &mut Vec<Point>) -> bool {
    out.clear();
    out.push(verts[0]);
    let mut q = verts[0];
    let mut seg = 0usize; // q lies on segment seg (between verts[seg], verts[seg+1])
    for _ in 0..steps {
        let mut entry = q;
        let mut found = None;
        let mut s = seg;
        while s + 1 < verts.len() {
            let b = verts[s + 1];
            let d = [b[0] - entry[0], b[1] - entry[1], b[2] - entry[2]];
            let a2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if a2 > 0.0 {
                let eq = [entry[0] - q[0], entry[1] - q[1], entry[2] - q[2]];
                let bq = d[0] * eq[0] + d[1] * eq[1] + d[2] * eq[2];
                let cq = eq[0] * eq[0] + eq[1] * eq[1] + eq[2] * eq[2] - c * c;
                // First forward crossing of the sphere |x - q| = c on the
                // piece [entry, b]; the entry point is inside the sphere, so
                // the larger quadratic root is the crossing.
                let disc = bq * bq - a2 * cq;
                if disc >= 0.0 {
                    let t = (-bq + disc.sqrt()) / a2;
                    if (0.0..=1.0).contains(&t) {
                        found = Some((
                            s,
                            [
                                entry[0] + t * d[0],
                                entry[1] + t * d[1],
                                entry[2] + t * d[2],
                            ],
                        ));
                        break;
                    }
                }
            }
            entry = b;
            s += 1;
        }
        let (new_seg, x) = match found {
            Some(v) => v,
            None => return false,
        };
        q = x;
        seg = new_seg;
        out.push(q);
    }
    true
}

/// Equal-arc placement of `steps` interior points (plus the start), the
/// fallback parameterization when the chord walk cannot complete.
fn arc_walk(verts: &[Point], total: f64, steps: usize) -> Vec<Point> {
    let k = steps + 2;
    let mut cum = Vec::with_capacity(verts.len());
    cum.push(0.0f64);
    for w in verts.windows(2) {
        cum.push(cum.last().unwrap() + dist3(&w[0], &w[1]));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(verts[0]);
    let mut seg = 0usize;
    for i in 1..=steps {
        let t = total * (i as f64) / ((k - 1) as f64);
        while seg + 2 < cum.len() && cum[seg + 1] < t {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let alpha = if len > 0.0 {
            ((t - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let a = &verts[seg];
        let b = &verts[seg + 1];
        out.push([
            a[0] + alpha * (b[0] - a[0]),
            a[1] + alpha * (b[1] - a[1]),
            a[2] + alpha * (b[2] - a[2]),
        ]);
    }
    out
}

/// A streamline resampled to a fixed point count, stored flat: point `k`
/// occupies slots `3k..3k+3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledStreamline {
    k: usize,
    flat: Vec<f64>,
}

impl ResampledStreamline {
    /// Wraps a flat coordinate vector; `flat.len()` must be `3 * k` with
    /// `k >= 2` and all values finite.
    pub fn from_flat(flat: Vec<f64>) -> Result<Self> {
        if flat.len() < 6 || flat.len() % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat length {} is not 3*K with K >= 2",
                flat.len()
            )));
        }
        if !flat.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { id: 0, point: 0 });
        }
        Ok(ResampledStreamline {
            k: flat.len() / 3,
            flat,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn point(&self, i: usize) -> Point {
        [self.flat[3 * i], self.flat[3 * i + 1], self.flat[3 * i + 2]]
    }

    /// Point order reversed. An involution: `s.reverse().reverse() == s`
    /// bitwise.
    pub fn reverse(&self) -> ResampledStreamline {
        let mut flat = Vec::with_capacity(self.flat.len());
        for i in (0..self.k).rev() {
            flat.extend_from_slice(&self.flat[3 * i..3 * i + 3]);
        }
        ResampledStreamline { k: self.k, flat }
    }

    /// Rounds coordinates to single precision, the storage convention of the
    /// search index and of the on-disk tractogram formats. Both the index and
    /// the brute-force oracles quantize through this one function so their
    /// distances agree bit for bit.
    pub fn quantize(&self) -> Vec<f32> {
        self.flat.iter().map(|&c| c as f32).collect()
    }

    /// View as an ordinary streamline (e.g. to resample again or write out).
    pub fn to_streamline(&self) -> Streamline {
        let points = (0..self.k).map(|i| self.point(i)).collect();
        Streamline { points }
    }
}

/// An ordered collection of streamlines with optional unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tractogram {
    streamlines: Vec<Streamline>,
    ids: Option<Vec<u64>>,
}

impl Tractogram {
    pub fn new(streamlines: Vec<Streamline>) -> Self {
        Tractogram {
            streamlines,
            ids: None,
        }
    }

    /// Attaches per-streamline ids; ids must be unique.
    pub fn with_ids(streamlines: Vec<Streamline>, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != streamlines.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} streamlines",
                ids.len(),
                streamlines.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0]));
        }
        Ok(Tractogram {
            streamlines,
            ids: Some(ids),
        })
    }

    pub fn streamlines(&self) -> &[Streamline] {
        &self.streamlines
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    /// Id of streamline `i`: the attached id when present, the index
    /// otherwise.
    pub fn id_of(&self, i: usize) -> u64 {
        match &self.ids {
            Some(ids) => ids[i],
            None => i as u64,
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Streamline> {
        self.streamlines.iter()
    }

    pub fn push(&mut self, s: Streamline) {
        debug_assert!(self.ids.is_none(), "push would desync explicit ids");
        self.streamlines.push(s);
    }
}
