//! Weight algebra for the automata code.
//!
//! Every weight in this crate is a cost, i.e. a negative log probability.
//! `times` is therefore plain addition and `zero` is `+inf`; the two
//! semirings differ only in how parallel paths are combined.

use std::fmt::Debug;

/// A semiring over negative-log weights.
///
/// Implementations must keep `plus` associative and commutative with identity
/// [`Semiring::zero`], `times` associative with identity [`Semiring::one`],
/// `times` distributing over `plus`, and `zero` annihilating `times`.
pub trait Semiring: Copy + Clone + Debug + Default + Send + Sync + 'static {
    /// Combines the weights of two alternative paths.
    fn plus(a: f64, b: f64) -> f64;

    /// Extends a path by another segment.
    #[inline]
    fn times(a: f64, b: f64) -> f64 {
        if a == f64::INFINITY || b == f64::INFINITY {
            f64::INFINITY
        } else {
            a + b
        }
    }

    /// Left division: the `x` with `times(b, x) == a`.
    #[inline]
    fn divide(a: f64, b: f64) -> f64 {
        if a == f64::INFINITY {
            f64::INFINITY
        } else {
            a - b
        }
    }

    #[inline]
    fn zero() -> f64 {
        f64::INFINITY
    }

    #[inline]
    fn one() -> f64 {
        0.0
    }

    fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        iter.into_iter().fold(Self::zero(), Self::plus)
    }
}

/// Probabilities summed in negative-log space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogSemiring;

/// Min-plus algebra; `plus` keeps the cheaper path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TropicalSemiring;

impl Semiring for LogSemiring {
    #[inline]
    fn plus(a: f64, b: f64) -> f64 {
        neg_log_add(a, b)
    }
}

impl Semiring for TropicalSemiring {
    #[inline]
    fn plus(a: f64, b: f64) -> f64 {
        a.min(b)
    }
}

/// `-ln(exp(-a) + exp(-b))` in the stable form `min - ln(1 + exp(-|a - b|))`.
#[inline]
pub fn neg_log_add(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY {
        return b;
    }
    if b == f64::INFINITY {
        return a;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    lo - (-(hi - lo)).exp().ln_1p()
}

/// Negative-log sum over a slice of costs, shifted by the minimum.
pub fn neg_log_sum(costs: &[f64]) -> f64 {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = costs.iter().map(|&c| (min - c).exp()).sum();
    min - s.ln()
}
