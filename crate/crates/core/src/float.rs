//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the algorithms are written against (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + serde::Serialize
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Tolerance for internal consistency checks: `1e-9` for `f64`, looser for
    /// narrower types where `1e-9` is below working precision.
    #[inline]
    fn check_tol() -> Self {
        Self::c(1e-9).max(Self::epsilon() * Self::c(1e4))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
pub fn mean<F: Real>(a: &[F]) -> F {
    if a.is_empty() {
        return F::zero();
    }
    a.iter().copied().sum::<F>() / F::from_usize_lossy(a.len())
}

/// Subtracts the mean in place and returns it.
pub fn center_in_place<F: Real>(a: &mut [F]) -> F {
    let m = mean(a);
    for v in a.iter_mut() {
        *v -= m;
    }
    m
}

/// Pearson sample correlation; `None` when either vector has zero spread.
pub fn pearson<F: Real>(a: &[F], b: &[F]) -> Option<F> {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (F::zero(), F::zero(), F::zero());
    for (x, y) in a.iter().zip(b) {
        let dx = *x - ma;
        let dy = *y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= F::zero() || sbb <= F::zero() {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}
