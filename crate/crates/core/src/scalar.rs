//! Scalar abstraction: the numeric kernels are generic over the real field
//! (`f32` or `f64`), with complex arithmetic built on top via [`num_complex`].

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the library is generic over.
///
/// `f64` is the working type for all shipped tolerances; `f32` compiles but
/// cannot meet them.
pub trait Scalar:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync
{
}

impl<T> Scalar for T where
    T: RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync
{
}

/// Complex column vector over the scalar `T`.
pub type CVector<T> = DVector<Complex<T>>;
/// Complex matrix over the scalar `T`.
pub type CMatrix<T> = DMatrix<Complex<T>>;
/// Real column vector.
pub type RVector<T> = DVector<T>;
/// Real matrix.
pub type RMatrix<T> = DMatrix<T>;

/// Converts an `f64` constant into the working scalar.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// `Complex::norm` for the generic scalar; `num_complex` gates the inherent
/// method on `T: Float`. Inherent methods take priority, so for concrete
/// floats this trait is shadowed by the identical built-in.
pub trait ComplexNorm<T> {
    fn norm(&self) -> T;
}

impl<T: Scalar> ComplexNorm<T> for Complex<T> {
    #[inline]
    fn norm(&self) -> T {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

/// Complex number from `f64` parts.
#[inline]
pub fn cplx<T: Scalar>(re: f64, im: f64) -> Complex<T> {
    Complex::new(real(re), real(im))
}

/// `i * pi` in the working scalar.
#[inline]
pub fn i_pi<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::pi())
}

/// `2 * pi * i` in the working scalar.
#[inline]
pub fn two_pi_i<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::two_pi())
}

/// Wraps `t` into the half-open interval `[-1/2, 1/2)`.
///
/// Returns the wrapped value `w` and the integer `k` with `t = w + k`. The
/// subtraction `t - round(t)` is exact in floating point for the coordinate
/// magnitudes that occur here, so wrapping an already-wrapped value is the
/// bitwise identity.
#[inline]
pub fn wrap_half<T: Scalar>(t: T) -> (T, i64) {
    let r = t.round();
    let mut w = t - r;
    let mut k = r
        .to_i64()
        .expect("coordinate too large to canonicalize");
    let half = real::<T>(0.5);
    if w >= half {
        w -= T::one();
        k += 1;
    }
    if w < -half {
        w += T::one();
        k -= 1;
    }
    (w, k)
}
