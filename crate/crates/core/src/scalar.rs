//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the toolkit is generic over: `f32` or `f64`.
///
/// The numerical tolerances quoted throughout the crate assume `f64`; the
/// `f32` instantiation exists for cheap experimentation only.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Complementary error function.
    fn erfc(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, `0.5 * erfc(-z / sqrt 2)`; accurate deep into both tails.
#[inline]
pub fn std_normal_cdf<T: Real>(z: T) -> T {
    T::lit(0.5) * (-z * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erfc()
}

#[inline]
pub fn std_normal_pdf<T: Real>(z: T) -> T {
    T::lit(FRAC_1_SQRT_2PI) * (T::lit(-0.5) * z * z).exp()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn cdf_matches_density_quadrature() {
        // 0.5 + integral of the density over [0, z]
        for &z in &[0.3, 1.0, 1.96, 2.5, -1.2, -3.0] {
            let q = 0.5 + simpson(std_normal_pdf::<f64>, 0.0, z, 20_000);
            assert!((std_normal_cdf(z) - q).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0f64), 800.0);
        assert!(softplus(-800.0f64) >= 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn f32_instantiation_works() {
        let c: f32 = std_normal_cdf(0.0f32);
        assert!((c - 0.5).abs() < 1e-7);
    }
}
