//! Mixed Minkowski norms over resampled streamlines and the flat envelope
//! norm that makes exact k-d tree pruning possible.
//!
//! A mixed norm `L^{p,q}` applies exponent `p` over the 3 coordinates of each
//! point-wise difference and exponent `q` across the K per-point values. With
//! averaging enabled the outer aggregation is divided by `K^{1/q}`, so
//! `L^{2,1}`-average is the mean point-wise Euclidean distance.
//!
//! The envelope norm is the flat Minkowski norm of exponent `m = max(p, q)`
//! over all `3K` coordinate differences. Norm monotonicity in the exponent
//! gives, for non-negative per-point values,
//!
//! ```text
//! flat_m(x) = || (|x_1|_m, ..., |x_K|_m) ||_m  <=  || (|x_1|_p, ...) ||_m
//!          <=  || (|x_1|_p, ...) ||_q  =  mixed_{p,q}(x)
//! ```
//!
//! so the envelope never exceeds the mixed norm, and being per-axis
//! decomposable it extends to axis-aligned boxes: no subtree whose box
//! envelope distance exceeds the search bound can contain a result.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::streamline::ResampledStreamline;

/// Supported Minkowski exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exponent {
    One,
    Two,
    Inf,
}

impl Exponent {
    /// 1/p with `1/inf = 0`.
    fn recip(self) -> f64 {
        match self {
            Exponent::One => 1.0,
            Exponent::Two => 0.5,
            Exponent::Inf => 0.0,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::One => write!(f, "1"),
            Exponent::Two => write!(f, "2"),
            Exponent::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Exponent::One),
            "2" => Ok(Exponent::Two),
            "inf" | "Inf" | "INF" => Ok(Exponent::Inf),
            other => Err(Error::InvalidArgument(format!(
                "unsupported exponent {other:?}: expected 1, 2 or inf"
            ))),
        }
    }
}

/// A mixed-norm definition: `inner` over the 3 coordinates of each point
/// difference, `outer` over the K point-wise values, plus the averaging flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NormSpec {
    pub inner: Exponent,
    pub outer: Exponent,
    /// Divide the outer aggregation by `K^{1/outer}`. A no-op for
    /// `outer = inf`.
    pub average: bool,
}

impl NormSpec {
    pub const fn new(inner: Exponent, outer: Exponent, average: bool) -> Self {
        NormSpec {
            inner,
            outer,
            average,
        }
    }

    /// Mean point-wise Euclidean distance, the usual streamline metric.
    pub const fn l21_average() -> Self {
        NormSpec::new(Exponent::Two, Exponent::One, true)
    }

    /// The divisor applied when `average` is set: `K^{1/outer}`.
    pub fn outer_scale(&self, k: usize) -> f64 {
        if !self.average {
            return 1.0;
        }
        match self.outer {
            Exponent::One => k as f64,
            Exponent::Two => (k as f64).sqrt(),
            Exponent::Inf => 1.0,
        }
    }

    /// Exponent of the flat envelope norm: `max(inner, outer)`.
    pub fn envelope_exponent(&self) -> Exponent {
        self.inner.max(self.outer)
    }

    /// Exponent of the flat norm the index prunes under: the outer exponent.
    pub fn prune_exponent(&self) -> Exponent {
        self.outer
    }

    /// The Hölder factor relating the flat outer-exponent norm to the mixed
    /// norm: `mixed >= flat_outer / prune_scale`, with
    /// `prune_scale = 3^max(0, 1/outer - 1/inner)`.
    ///
    /// Per point, `|x|_q <= 3^(1/q - 1/p) |x|_p` for `q < p` in 3 dimensions,
    /// and `|x|_q <= |x|_p` for `q >= p`; aggregating with the outer exponent
    /// gives the stated bound. Unlike the max-exponent envelope this loses
    /// only a constant factor, never a factor of `K^(1/q)`, which is what
    /// keeps pruning effective in high flattened dimension.
    pub fn prune_scale(&self) -> f64 {
        let e = self.outer.recip() - self.inner.recip();
        if e <= 0.0 {
            1.0
        } else if e == 1.0 {
            3.0
        } else {
            3f64.sqrt()
        }
    }

    /// The Hölder scaling factor `D^(1/outer - 1/inner)` for `D = 3`,
    /// documentation value for the classical inequality chain.
    pub fn holder_scale(&self) -> f64 {
        let e = self.outer.recip() - self.inner.recip();
        3f64.powf(e)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L{},{}{}",
            self.inner,
            self.outer,
            if self.average { "-avg" } else { "" }
        )
    }
}

/// How query orientation is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrientationPolicy {
    /// Streamlines compared as stored.
    Direct,
    /// Distance is the minimum over the query's two point orders.
    #[default]
    DirectFlip,
}

impl fmt::Display for OrientationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrientationPolicy::Direct => write!(f, "direct"),
            OrientationPolicy::DirectFlip => write!(f, "direct-flip"),
        }
    }
}

impl FromStr for OrientationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(OrientationPolicy::Direct),
            "direct-flip" | "flip" => Ok(OrientationPolicy::DirectFlip),
            other => Err(Error::InvalidArgument(format!(
                "unknown orientation policy {other:?}"
            ))),
        }
    }
}

/// Coordinate element of a flattened streamline; distances always accumulate
/// in f64 regardless of the storage precision.
pub trait Coord: Copy {
    fn to_f64(self) -> f64;
}

impl Coord for f32 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Coord for f64 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

#[inline(always)]
fn inner_norm<T: Coord>(a: &[T], b: &[T], i: usize, p: Exponent) -> f64 {
    let dx = (a[i].to_f64() - b[i].to_f64()).abs();
    let dy = (a[i + 1].to_f64() - b[i + 1].to_f64()).abs();
    let dz = (a[i + 2].to_f64() - b[i + 2].to_f64()).abs();
    match p {
        Exponent::One => dx + dy + dz,
        Exponent::Two => (dx * dx + dy * dy + dz * dz).sqrt(),
        Exponent::Inf => dx.max(dy).max(dz),
    }
}

/// Un-averaged mixed norm of the difference of two flat coordinate vectors.
#[inline]
pub fn mixed_raw<T: Coord>(a: &[T], b: &[T], inner: Exponent, outer: Exponent) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len() % 3, 0);
    let mut acc = 0.0f64;
    let mut i = 0;
    match outer {
        Exponent::One => {
            while i < a.len() {
                acc += inner_norm(a, b, i, inner);
                i += 3;
            }
            acc
        }
        Exponent::Two => {
            while i < a.len() {
                let v = inner_norm(a, b, i, inner);
                acc += v * v;
                i += 3;
            }
            acc.sqrt()
        }
        Exponent::Inf => {
            while i < a.len() {
                acc = acc.max(inner_norm(a, b, i, inner));
                i += 3;
            }
            acc
        }
    }
}

/// Like [`mixed_raw`] but abandons early once the partial aggregation proves
/// the result exceeds `bound` (un-averaged units). `None` is returned only
/// when the true value is `> bound`; a returned value can exceed `bound` by
/// rounding (the squared-domain comparison carries epsilon slack), so callers
/// enforcing an inclusive bound re-check the returned distance.
#[inline]
pub fn mixed_raw_within<T: Coord>(
    a: &[T],
    b: &[T],
    inner: Exponent,
    outer: Exponent,
    bound: f64,
) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    let mut i = 0;
    match outer {
        Exponent::One => {
            while i < a.len() {
                acc += inner_norm(a, b, i, inner);
                if acc > bound {
                    return None;
                }
                i += 3;
            }
            Some(acc)
        }
        Exponent::Two => {
            // bound^2 can round below the exact square; the slack keeps
            // distance-equal ties alive for the caller's tie-break.
            let bound_sq = bound * bound * (1.0 + 4.0 * f64::EPSILON);
            while i < a.len() {
                let v = inner_norm(a, b, i, inner);
                acc += v * v;
                if acc > bound_sq {
                    return None;
                }
                i += 3;
            }
            Some(acc.sqrt())
        }
        Exponent::Inf => {
            while i < a.len() {
                let v = inner_norm(a, b, i, inner);
                if v > bound {
                    return None;
                }
                acc = acc.max(v);
                i += 3;
            }
            Some(acc)
        }
    }
}

/// Flat Minkowski norm of exponent `m` over all coordinate differences.
#[inline]
pub fn flat_raw<T: Coord>(a: &[T], b: &[T], m: Exponent) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    match m {
        Exponent::One => {
            for (x, y) in a.iter().zip(b) {
                acc += (x.to_f64() - y.to_f64()).abs();
            }
            acc
        }
        Exponent::Two => {
            for (x, y) in a.iter().zip(b) {
                let d = x.to_f64() - y.to_f64();
                acc += d * d;
            }
            acc.sqrt()
        }
        Exponent::Inf => {
            for (x, y) in a.iter().zip(b) {
                acc = acc.max((x.to_f64() - y.to_f64()).abs());
            }
            acc
        }
    }
}

fn check_same_k(a: &ResampledStreamline, b: &ResampledStreamline) -> Result<()> {
    if a.k() != b.k() {
        return Err(Error::PointCountMismatch {
            left: a.k(),
            right: b.k(),
        });
    }
    Ok(())
}

/// Mixed-norm distance in the spec's reporting convention (averaged when the
/// spec says so).
pub fn mixed_norm_distance(
    a: &ResampledStreamline,
    b: &ResampledStreamline,
    spec: &NormSpec,
) -> Result<f64> {
    check_same_k(a, b)?;
    let raw = mixed_raw(a.flat(), b.flat(), spec.inner, spec.outer);
    Ok(raw / spec.outer_scale(a.k()))
}

/// Orientation-invariant distance: the minimum over the two orientations of
/// `b`, plus whether the flipped orientation won. Ties report `false`.
pub fn flip_distance(
    a: &ResampledStreamline,
    b: &ResampledStreamline,
    spec: &NormSpec,
) -> Result<(f64, bool)> {
    check_same_k(a, b)?;
    let direct = mixed_norm_distance(a, b, spec)?;
    let flipped = mixed_norm_distance(a, &b.reverse(), spec)?;
    if flipped < direct {
        Ok((flipped, true))
    } else {
        Ok((direct, false))
    }
}

/// The flat envelope norm in the spec's reporting convention. Always
/// `<= mixed_norm_distance(a, b, spec)`; this is the exactness-preserving
/// pruning bound.
pub fn envelope_distance(
    a: &ResampledStreamline,
    b: &ResampledStreamline,
    spec: &NormSpec,
) -> Result<f64> {
    check_same_k(a, b)?;
    let raw = flat_raw(a.flat(), b.flat(), spec.envelope_exponent());
    Ok(raw / spec.outer_scale(a.k()))
}

/// All nine supported exponent pairs, un-averaged. Handy for sweeps.
pub const ALL_EXPONENT_PAIRS: [(Exponent, Exponent); 9] = [
    (Exponent::One, Exponent::One),
    (Exponent::One, Exponent::Two),
    (Exponent::One, Exponent::Inf),
    (Exponent::Two, Exponent::One),
    (Exponent::Two, Exponent::Two),
    (Exponent::Two, Exponent::Inf),
    (Exponent::Inf, Exponent::One),
    (Exponent::Inf, Exponent::Two),
    (Exponent::Inf, Exponent::Inf),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamline::Streamline;

    fn rs(points: &[[f64; 3]]) -> ResampledStreamline {
        let flat = points.iter().flatten().copied().collect();
        ResampledStreamline::from_flat(flat).unwrap()
    }

    #[test]
    fn identical_inputs_are_zero() {
        let a = rs(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        for (p, q) in ALL_EXPONENT_PAIRS {
            for avg in [false, true] {
                let spec = NormSpec::new(p, q, avg);
                assert_eq!(mixed_norm_distance(&a, &a, &spec).unwrap(), 0.0);
                assert_eq!(envelope_distance(&a, &a, &spec).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn translation_under_l21_average() {
        let a = rs(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = rs(&[[3.0, 0.0, 0.0], [4.0, 1.0, 0.0], [5.0, 0.0, 0.0]]);
        let d = mixed_norm_distance(&a, &b, &NormSpec::l21_average()).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn hand_evaluated_l21_average() {
        // Point diffs: (0,0,0) and (2,-2,0): (0 + sqrt(8)) / 2.
        let a = rs(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = rs(&[[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let d = mixed_norm_distance(&a, &b, &NormSpec::l21_average()).unwrap();
        assert!((d - 8f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((d - 1.41421).abs() < 1e-5);
    }

    #[test]
    fn mismatched_k_is_shape_error() {
        let a = rs(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let b = rs(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(matches!(
            mixed_norm_distance(&a, &b, &NormSpec::l21_average()),
            Err(Error::PointCountMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn flip_distance_of_reversed_copy() {
        let s = Streamline::new(vec![[0.0; 3], [5.0, 1.0, 0.0], [9.0, 0.0, 2.0]])
            .unwrap()
            .resample(16)
            .unwrap();
        let spec = NormSpec::l21_average();
        let (d, flipped) = flip_distance(&s, &s.reverse(), &spec).unwrap();
        assert_eq!(d, 0.0);
        assert!(flipped);
        // Tie-break: identical operands resolve as not flipped.
        let (d, flipped) = flip_distance(&s, &s, &spec).unwrap();
        assert_eq!(d, 0.0);
        assert!(!flipped);
    }

    #[test]
    fn envelope_hand_example() {
        // Diffs are (-3,0,0) per point: flat L2 = sqrt(18), mixed L2,1 = 6.
        let a = rs(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = rs(&[[3.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
        let spec = NormSpec::new(Exponent::Two, Exponent::One, false);
        let env = envelope_distance(&a, &b, &spec).unwrap();
        let mixed = mixed_norm_distance(&a, &b, &spec).unwrap();
        assert!((env - 18f64.sqrt()).abs() < 1e-12);
        assert!((mixed - 6.0).abs() < 1e-12);
        assert!(env <= mixed);
    }

    #[test]
    fn holder_scale_values() {
        assert!((NormSpec::new(Exponent::Two, Exponent::One, false).holder_scale()
            - 3f64.sqrt())
        .abs()
            < 1e-15);
        assert_eq!(
            NormSpec::new(Exponent::Two, Exponent::Two, false).holder_scale(),
            1.0
        );
        assert_eq!(
            NormSpec::new(Exponent::Inf, Exponent::One, false).holder_scale(),
            3.0
        );
    }

    #[test]
    fn bounded_kernel_agrees_with_plain_kernel() {
        let a = rs(&[[0.0, 0.0, 0.0], [1.0, 2.0, 0.5], [2.0, 0.0, 1.0]]);
        let b = rs(&[[0.5, 0.0, 0.0], [1.0, 2.5, 0.0], [2.5, 1.0, 1.0]]);
        for (p, q) in ALL_EXPONENT_PAIRS {
            let full = mixed_raw(a.flat(), b.flat(), p, q);
            let within = mixed_raw_within(a.flat(), b.flat(), p, q, full).unwrap();
            assert_eq!(full, within);
            assert!(mixed_raw_within(a.flat(), b.flat(), p, q, full * 0.999).is_none());
        }
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Inf);
        assert_eq!("2".parse::<Exponent>().unwrap(), Exponent::Two);
        assert!("3".parse::<Exponent>().is_err());
    }
}
