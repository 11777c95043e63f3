//! Deterministic synthetic tractogram generation.
//!
//! Bundles are built around centroid polylines (smoothed random walks with
//! arc lengths in a configurable range). Each member is a rigid translation
//! of its centroid (a point drawn in the tube-radius ball) plus independent
//! per-point jitter, with half of the members randomly reversed in
//! orientation. Translations preserve arc length exactly, so member lengths
//! stay within the recipe range up to `2 * jitter * (points - 1)`.

use crate::streamline::{Point, Streamline, Tractogram};
use crate::synth::rng::SplitMix64;

/// One bundle of a [`BundleRecipe`].
#[derive(Debug, Clone)]
pub struct BundleSpec {
    pub centroid: Vec<Point>,
    /// Members are offset from the centroid by a point in this ball.
    pub tube_radius: f64,
    pub members: usize,
    /// Independent per-point displacement radius.
    pub jitter: f64,
}

/// A seeded synthetic dataset description.
#[derive(Debug, Clone)]
pub struct BundleRecipe {
    pub seed: u64,
    pub bundles: Vec<BundleSpec>,
    /// Arc-length range the centroids were drawn from, mm.
    pub length_range: (f64, f64),
}

impl BundleRecipe {
    /// Builds `n_bundles` bundles whose bounding regions sit on a coarse grid
    /// far enough apart that inter-bundle distances exceed `min_gap` mm under
    /// any orientation.
    pub fn well_separated(
        seed: u64,
        n_bundles: usize,
        members: usize,
        tube_radius: f64,
        jitter: f64,
        min_gap: f64,
    ) -> BundleRecipe {
        let length_range = (60.0, 160.0);
        let mut rng = SplitMix64::new(seed ^ 0x0B0D_D1E5);
        // A walk of length L stays within L of its start; add tube and jitter
        // slack on both sides of the gap.
        let cell = 2.0 * length_range.1 + min_gap + 2.0 * (tube_radius + jitter) + 20.0;
        let side = (n_bundles as f64).cbrt().ceil() as usize;
        let mut bundles = Vec::with_capacity(n_bundles);
        for b in 0..n_bundles {
            let length = rng.range(length_range.0, length_range.1);
            let mut centroid = smooth_centroid(&mut rng, length, 5.0, 0.4);
            let gx = (b % side) as f64;
            let gy = ((b / side) % side) as f64;
            let gz = (b / (side * side)) as f64;
            for p in &mut centroid {
                p[0] += gx * cell;
                p[1] += gy * cell;
                p[2] += gz * cell;
            }
            bundles.push(BundleSpec {
                centroid,
                tube_radius,
                members,
                jitter,
            });
        }
        BundleRecipe {
            seed,
            bundles,
            length_range: (length_range.0, length_range.1 + 1.0),
        }
    }

    /// Generates the tractogram and its ground-truth bundle labels.
    /// Deterministic for a fixed seed; single-threaded by design.
    pub fn generate(&self) -> (Tractogram, Vec<u32>) {
        let mut rng = SplitMix64::new(self.seed);
        let mut streamlines = Vec::new();
        let mut labels = Vec::new();
        for (b, spec) in self.bundles.iter().enumerate() {
            for _ in 0..spec.members {
                let offset = if spec.tube_radius > 0.0 {
                    rng.in_ball(spec.tube_radius)
                } else {
                    [0.0; 3]
                };
                let mut points: Vec<Point> = Vec::with_capacity(spec.centroid.len());
                for c in &spec.centroid {
                    let j = if spec.jitter > 0.0 {
                        rng.in_ball(spec.jitter)
                    } else {
                        [0.0; 3]
                    };
                    points.push([
                        c[0] + offset[0] + j[0],
                        c[1] + offset[1] + j[1],
                        c[2] + offset[2] + j[2],
                    ]);
                }
                if rng.next_bool() {
                    points.reverse();
                }
                streamlines.push(Streamline::new(points).expect("generated streamline valid"));
                labels.push(b as u32);
            }
        }
        (Tractogram::new(streamlines), labels)
    }
}

/// A smoothed random walk of total arc length `length_mm` starting at the
/// origin: fixed step size, direction nudged by `wobble` each step.
pub fn smooth_centroid(
    rng: &mut SplitMix64,
    length_mm: f64,
    step_mm: f64,
    wobble: f64,
) -> Vec<Point> {
    let n_segs = ((length_mm / step_mm).round() as usize).max(2);
    let step = length_mm / n_segs as f64;
    let mut dir = rng.unit_vector();
    let mut p = [0.0f64; 3];
    let mut points = Vec::with_capacity(n_segs + 1);
    points.push(p);
    for _ in 0..n_segs {
        let nudge = rng.in_ball(wobble);
        let mut d = [dir[0] + nudge[0], dir[1] + nudge[1], dir[2] + nudge[2]];
        let n2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if n2 > 1e-12 {
            let inv = 1.0 / n2.sqrt();
            d = [d[0] * inv, d[1] * inv, d[2] * inv];
            dir = d;
        }
        p = [p[0] + step * dir[0], p[1] + step * dir[1], p[2] + step * dir[2]];
        points.push(p);
    }
    points
}

/// `n` independent smooth walks with start positions uniform in a cube of
/// side `extent_mm` and arc lengths uniform in `length_range`. The general
/// "soup" dataset for exactness sweeps.
pub fn random_soup(seed: u64, n: usize, length_range: (f64, f64), extent_mm: f64) -> Tractogram {
    let mut rng = SplitMix64::new(seed);
    let mut streamlines = Vec::with_capacity(n);
    for _ in 0..n {
        let length = rng.range(length_range.0, length_range.1);
        let start = [
            rng.range(0.0, extent_mm),
            rng.range(0.0, extent_mm),
            rng.range(0.0, extent_mm),
        ];
        let mut points = smooth_centroid(&mut rng, length, 5.0, 0.5);
        for p in &mut points {
            p[0] += start[0];
            p[1] += start[1];
            p[2] += start[2];
        }
        streamlines.push(Streamline::new(points).expect("soup streamline valid"));
    }
    Tractogram::new(streamlines)
}

/// `n` nearly straight streamlines with uniform starts and directions: the
/// low-intrinsic-dimension uniform benchmark set (starts, directions and
/// lengths vary; curvature is minimal, so proximity structure is genuine
/// rather than drowned in distance concentration).
pub fn uniform_segments(
    seed: u64,
    n: usize,
    length_range: (f64, f64),
    extent_mm: f64,
) -> Tractogram {
    let mut rng = SplitMix64::new(seed);
    let mut streamlines = Vec::with_capacity(n);
    for _ in 0..n {
        let length = rng.range(length_range.0, length_range.1);
        let start = [
            rng.range(0.0, extent_mm),
            rng.range(0.0, extent_mm),
            rng.range(0.0, extent_mm),
        ];
        let mut points = smooth_centroid(&mut rng, length, 5.0, 0.05);
        for p in &mut points {
            p[0] += start[0];
            p[1] += start[1];
            p[2] += start[2];
        }
        streamlines.push(Streamline::new(points).expect("segment valid"));
    }
    Tractogram::new(streamlines)
}

/// Isolated far-away streamlines, each at least `spacing` mm from the next
/// and from the origin region. Appended to a dataset they stay unconnected at
/// any radius well below `spacing`.
pub fn scatter_outliers(seed: u64, n: usize, spacing: f64) -> Vec<Streamline> {
    let mut rng = SplitMix64::new(seed ^ 0x0u64.wrapping_sub(1));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let length = rng.range(60.0, 120.0);
        let mut points = smooth_centroid(&mut rng, length, 5.0, 0.4);
        // March outliers along -x, far from the positive grid used by
        // well_separated bundles.
        let base = -(spacing * (i + 1) as f64) - 500.0;
        for p in &mut points {
            p[0] += base;
            p[1] -= 500.0;
            p[2] -= 500.0;
        }
        out.push(Streamline::new(points).expect("outlier valid"));
    }
    out
}

/// A labeled atlas plus held-out query streamlines drawn from the same
/// bundles. Returns (atlas tractogram, atlas labels, queries, query labels).
pub fn atlas_and_queries(
    seed: u64,
    n_bundles: usize,
    atlas_members: usize,
    query_members: usize,
) -> (Tractogram, Vec<u32>, Tractogram, Vec<u32>) {
    let recipe = BundleRecipe::well_separated(
        seed,
        n_bundles,
        atlas_members + query_members,
        2.0,
        0.4,
        40.0,
    );
    let (all, labels) = recipe.generate();
    let mut atlas = Vec::new();
    let mut atlas_labels = Vec::new();
    let mut queries = Vec::new();
    let mut query_labels = Vec::new();
    let per = atlas_members + query_members;
    for (i, s) in all.streamlines().iter().enumerate() {
        if i % per < atlas_members {
            atlas.push(s.clone());
            atlas_labels.push(labels[i]);
        } else {
            queries.push(s.clone());
            query_labels.push(labels[i]);
        }
    }
    (
        Tractogram::new(atlas),
        atlas_labels,
        Tractogram::new(queries),
        query_labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::{flip_distance, NormSpec};

    #[test]
    fn zero_jitter_single_member_is_centroid() {
        let centroid = vec![[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        let recipe = BundleRecipe {
            seed: 3,
            bundles: vec![BundleSpec {
                centroid: centroid.clone(),
                tube_radius: 0.0,
                members: 1,
                jitter: 0.0,
            }],
            length_range: (5.0, 15.0),
        };
        let (t, labels) = recipe.generate();
        assert_eq!(t.len(), 1);
        assert_eq!(labels, vec![0]);
        let got = t.streamlines()[0].points();
        // Orientation may be reversed; compare as a set of endpoints.
        let fwd = got == centroid.as_slice();
        let mut rev = centroid.clone();
        rev.reverse();
        assert!(fwd || got == rev.as_slice());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let r = BundleRecipe::well_separated(11, 3, 20, 2.0, 0.3, 40.0);
        let (a, la) = r.generate();
        let (b, lb) = r.generate();
        assert_eq!(la, lb);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.points(), y.points());
        }
    }

    #[test]
    fn member_lengths_stay_near_recipe_range() {
        let r = BundleRecipe::well_separated(5, 2, 30, 2.0, 0.4, 40.0);
        let (t, _) = r.generate();
        for s in t.iter() {
            let allow = 2.0 * 0.4 * (s.len() - 1) as f64;
            let l = s.arc_length();
            assert!(l >= r.length_range.0 - allow && l <= r.length_range.1 + allow);
        }
    }

    #[test]
    fn bundles_separate_under_flip_distance() {
        // Spec'd construction: 3 bundles x 200 members, 2mm tubes, centroids
        // >= 40mm apart. Min inter-bundle flip distance must exceed max
        // intra-bundle flip distance (whole-pairs oracle at reduced count).
        let r = BundleRecipe::well_separated(2, 3, 40, 2.0, 0.3, 40.0);
        let (t, labels) = r.generate();
        let spec = NormSpec::l21_average();
        let rs: Vec<_> = t.iter().map(|s| s.resample(32).unwrap()).collect();
        let mut max_intra = 0.0f64;
        let mut min_inter = f64::INFINITY;
        for i in 0..rs.len() {
            for j in (i + 1)..rs.len() {
                let (d, _) = flip_distance(&rs[i], &rs[j], &spec).unwrap();
                if labels[i] == labels[j] {
                    max_intra = max_intra.max(d);
                } else {
                    min_inter = min_inter.min(d);
                }
            }
        }
        assert!(
            max_intra < min_inter,
            "intra {max_intra} vs inter {min_inter}"
        );
        assert!(min_inter > 40.0);
    }

    #[test]
    fn outliers_are_far_from_everything() {
        let outliers = scatter_outliers(1, 5, 400.0);
        let spec = NormSpec::l21_average();
        let rs: Vec<_> = outliers.iter().map(|s| s.resample(32).unwrap()).collect();
        for i in 0..rs.len() {
            for j in (i + 1)..rs.len() {
                let (d, _) = flip_distance(&rs[i], &rs[j], &spec).unwrap();
                assert!(d > 40.0);
            }
        }
    }
}
