//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type so the same code runs in `f32` or `f64`.
//!
//! Tolerances quoted throughout the crate (solver residuals, verification
//! thresholds) assume `f64`; `f32` instantiations are supported but verified
//! at looser precision.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by all numeric modules.
///
/// Deliberately a pure marker: every capability comes from the `num_traits`
/// supertraits so a new scalar type only has to satisfy those.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics only if `T` cannot represent any `f64` at all, which no supported
/// scalar triggers; overflow to infinity is accepted (matches `as` casts).
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("scalar type must convert from f64")
}

/// Converts the working scalar back to `f64` (for serialization and logs).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar type must convert to f64")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_roundtrips_f64() {
        let x: f64 = real(0.1);
        assert_eq!(x, 0.1);
        let y: f32 = real(0.5);
        assert_eq!(y, 0.5f32);
    }

    #[test]
    fn to_f64_widens_f32_exactly() {
        let x = 0.25f32;
        assert_eq!(to_f64(x), 0.25);
    }
}
