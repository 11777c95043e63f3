//! Exact proximity search for tractography streamlines under `L^{p,q}`
//! Minkowski mixed norms, with the downstream analyses the queries enable:
//! atlas bundle segmentation, sparse radius-neighborhood graphs, density
//! clustering, and Clopper–Pearson reliability statistics for
//! streamline-count connectivity matrices.
//!
//! The center piece is [`SearchIndex`], a k-d tree over fixed-point-count
//! resampled streamlines that answers KNN and radius queries exactly for any
//! supported mixed norm. Pruning relies on a flat envelope norm that provably
//! lower-bounds the mixed norm (see the [`norm`] module), so no true neighbor
//! is ever skipped; results are identical to a brute-force scan.
//!
//! Batch queries, graph construction and segmentation fan out over a rayon
//! pool when the `parallel` feature (default) is enabled, with bit-identical
//! results at any worker count. Building without the feature falls back to
//! sequential execution.

pub mod analysis;
pub mod error;
pub mod index;
pub mod io;
pub mod norm;
pub mod par;
pub mod stats;
pub mod streamline;
pub mod synth;

pub use error::{Error, Result};
pub use index::{IndexParams, Neighbor, QueryStats, SearchIndex};
pub use norm::{Exponent, NormSpec, OrientationPolicy};
pub use streamline::{Point, ResampledStreamline, Streamline, Tractogram};
