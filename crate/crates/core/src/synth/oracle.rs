//! Brute-force query oracles: the definitionally exact answers the tree is
//! measured against.
//!
//! The oracle shares nothing with the index beyond the core distance kernels
//! and the quantization step both pipelines apply; it scans every row
//! linearly with no pruning and no early abandoning.

use crate::error::Result;
use crate::index::Neighbor;
use crate::norm::{mixed_raw, NormSpec, OrientationPolicy};
use crate::streamline::{Streamline, Tractogram};

/// Linear-scan searcher over a resampled, quantized dataset.
pub struct BruteForce {
    rows: Vec<Vec<f32>>,
    k_points: usize,
    spec: NormSpec,
    policy: OrientationPolicy,
}

impl BruteForce {
    pub fn new(
        data: &Tractogram,
        k_points: usize,
        spec: NormSpec,
        policy: OrientationPolicy,
    ) -> Result<BruteForce> {
        let mut rows = Vec::with_capacity(data.len());
        for s in data.iter() {
            rows.push(s.resample(k_points)?.quantize());
        }
        Ok(BruteForce {
            rows,
            k_points,
            spec,
            policy,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn scan(&self, query: &Streamline) -> Result<Vec<(f64, u32, bool)>> {
        let q = query.resample(self.k_points)?.quantize();
        let q_rev: Option<Vec<f32>> = match self.policy {
            OrientationPolicy::Direct => None,
            OrientationPolicy::DirectFlip => Some(crate::index::reverse_flat(&q)),
        };
        let mut out = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let direct = mixed_raw(&q, row, self.spec.inner, self.spec.outer);
            let (d, flipped) = match &q_rev {
                None => (direct, false),
                Some(rev) => {
                    let fd = mixed_raw(rev, row, self.spec.inner, self.spec.outer);
                    if fd < direct {
                        (fd, true)
                    } else {
                        (direct, false)
                    }
                }
            };
            out.push((d, i as u32, flipped));
        }
        Ok(out)
    }

    fn finish(&self, mut hits: Vec<(f64, u32, bool)>) -> Vec<Neighbor> {
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let scale = self.spec.outer_scale(self.k_points);
        hits.into_iter()
            .map(|(d, id, flipped)| Neighbor {
                id,
                distance: d / scale,
                flipped,
            })
            .collect()
    }

    /// Full-scan KNN with the same ordering and tie-break contract as the
    /// index.
    pub fn knn(&self, query: &Streamline, k: usize) -> Result<Vec<Neighbor>> {
        let hits = self.scan(query)?;
        let mut all = self.finish(hits);
        all.truncate(k);
        Ok(all)
    }

    /// Full-scan radius query, inclusive bound, same conventions as the
    /// index.
    pub fn radius(&self, query: &Streamline, r: f64) -> Result<Vec<Neighbor>> {
        let r_int = r * self.spec.outer_scale(self.k_points);
        let hits = self
            .scan(query)?
            .into_iter()
            .filter(|&(d, _, _)| d <= r_int)
            .collect();
        Ok(self.finish(hits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamline::Streamline;

    fn dataset() -> Tractogram {
        let mut t = Tractogram::default();
        for i in 0..5 {
            let y = i as f64 * 3.0;
            t.push(
                Streamline::new(vec![[0.0, y, 0.0], [10.0, y, 0.0], [20.0, y, 0.0]]).unwrap(),
            );
        }
        t
    }

    #[test]
    fn knn_on_contained_query_hits_distance_zero() {
        let t = dataset();
        let bf = BruteForce::new(&t, 8, NormSpec::l21_average(), OrientationPolicy::Direct)
            .unwrap();
        let hits = bf.knn(&t.streamlines()[2], 1).unwrap();
        assert_eq!(hits[0].id, 2);
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn infinite_radius_returns_all_ids() {
        let t = dataset();
        let bf = BruteForce::new(&t, 8, NormSpec::l21_average(), OrientationPolicy::DirectFlip)
            .unwrap();
        let hits = bf.radius(&t.streamlines()[0], f64::INFINITY).unwrap();
        assert_eq!(hits.len(), t.len());
    }
}
