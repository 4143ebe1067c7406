//! Second-order theta coordinates (the Kummer map into `P^(2^g - 1)`),
//! collinearity residuals in Kummer and sampled-section form, and the
//! addition-formula cross-check tying the two together.
//!
//! Kummer coordinates are `Theta[sigma](z) = theta[sigma/2; 0](2z | 2tau)`
//! for `sigma in {0,1}^g`.

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::scalar::{real, CMatrix, ComplexNorm, CVector, RVector, Scalar};
use crate::siegel::{AbelianPoint, RiemannMatrix};
use crate::solver::homogeneous_lsq;
use crate::theta::{theta, theta_char, EvalPlan};

/// Unnormalized coordinates below this magnitude count as an evaluation
/// failure (`AllZero`), not geometry: `|2 Theta|` is base-point-free.
pub const ALL_ZERO_TOL: f64 = 1e-13;

/// A normalized point of projective Kummer space: unit Euclidean norm with
/// the first significant coordinate rotated to the positive real axis.
#[derive(Clone, Debug)]
pub struct KummerVector<T: Scalar> {
    coords: CVector<T>,
}

impl<T: Scalar> KummerVector<T> {
    pub fn coords(&self) -> &CVector<T> {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Projective distance `min(||u - v||, ||u + v||)` between normalized
    /// representatives.
    pub fn projective_distance(&self, other: &Self) -> T {
        let d1 = (&self.coords - &other.coords).norm();
        let d2 = (&self.coords + &other.coords).norm();
        d1.min(d2)
    }
}

/// Evaluation context for one period matrix: caches the doubled matrix, its
/// plan, and the characteristic list. Pure and shareable across threads.
pub struct KummerEngine<T: Scalar> {
    tau: RiemannMatrix<T>,
    tau2: RiemannMatrix<T>,
    plan: EvalPlan<T>,
    plan2: EvalPlan<T>,
    half_chars: Vec<RVector<T>>,
}

impl<T: Scalar> KummerEngine<T> {
    pub fn new(tau: &RiemannMatrix<T>, target_abs_error: T) -> Result<Self> {
        let g = tau.genus();
        let tau2 = tau.doubled();
        let plan = EvalPlan::new(tau, target_abs_error, 0)?;
        let plan2 = EvalPlan::new(&tau2, target_abs_error, 0)?;
        let half = real::<T>(0.5);
        let half_chars = (0..(1usize << g))
            .map(|mask| {
                RVector::from_fn(g, |i, _| if mask >> i & 1 == 1 { half } else { T::zero() })
            })
            .collect();
        Ok(Self {
            tau: tau.clone(),
            tau2,
            plan,
            plan2,
            half_chars,
        })
    }

    pub fn tau(&self) -> &RiemannMatrix<T> {
        &self.tau
    }

    /// Order-0 plan for the base matrix (shared by the section products).
    pub fn base_plan(&self) -> &EvalPlan<T> {
        &self.plan
    }

    /// Unnormalized second-order theta coordinates `Theta[sigma](z)`.
    pub fn second_order_coords(&self, z: &AbelianPoint<T>) -> Result<CVector<T>> {
        let g = self.tau.genus();
        // 2z written against 2tau: x-part doubles, y-part carries over
        let z2 = AbelianPoint::from_xy(z.x() * real::<T>(2.0), z.y().clone());
        let zero = RVector::zeros(g);
        let mut coords = CVector::zeros(1 << g);
        for (k, a) in self.half_chars.iter().enumerate() {
            coords[k] = theta_char(a, &zero, &z2, &self.tau2, &self.plan2)?;
        }
        Ok(coords)
    }

    /// The Kummer map `K(z)`, normalized.
    pub fn map(&self, z: &AbelianPoint<T>) -> Result<KummerVector<T>> {
        let raw = self.second_order_coords(z)?;
        let max = raw.iter().map(|c| c.norm()).fold(T::zero(), |a, b| a.max(b));
        if max < real(ALL_ZERO_TOL) {
            return Err(CoreError::AllZero);
        }
        let mut coords = raw.scale(T::one() / raw.norm());
        let lead = coords
            .iter()
            .position(|c| c.norm() > real(1e-8))
            .unwrap_or(0);
        let phase = coords[lead] / Complex::new(coords[lead].norm(), T::zero());
        coords = coords.map(|c| c * phase.conj());
        Ok(KummerVector { coords })
    }

    /// Singular-value collinearity residual `sigma_3 / sigma_1` of the
    /// stacked normalized Kummer vectors of `a`, `b`, `c`; zero iff the
    /// three image points are collinear.
    pub fn collinearity_residual(
        &self,
        a: &AbelianPoint<T>,
        b: &AbelianPoint<T>,
        c: &AbelianPoint<T>,
    ) -> Result<T> {
        let rows = [self.map(a)?, self.map(b)?, self.map(c)?];
        let n = rows[0].len();
        let m = CMatrix::<T>::from_fn(3, n, |i, j| rows[i].coords()[j]);
        let svd = m.svd(false, false);
        let mut sv: Vec<T> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        // a 3 x 2 matrix (g = 1) has rank <= 2 structurally
        if sv.len() < 3 || sv[0] == T::zero() {
            return Ok(T::zero());
        }
        Ok(sv[2] / sv[0])
    }

    /// Fits `alpha theta_a theta_{-a} + beta theta_b theta_{-b} +
    /// gamma theta_c theta_{-c} = 0` over the sample set.
    ///
    /// Returns the unit-norm coefficient vector and the residual
    /// `sigma_min / sigma_max` of the `N x 3` design matrix.
    pub fn section_collinearity_fit(
        &self,
        a: &AbelianPoint<T>,
        b: &AbelianPoint<T>,
        c: &AbelianPoint<T>,
        samples: &[AbelianPoint<T>],
    ) -> Result<(CVector<T>, T)> {
        let needed = 3 << self.tau.genus();
        if samples.len() < needed {
            return Err(CoreError::TooFewSamples {
                needed,
                got: samples.len(),
            });
        }
        let mut m = CMatrix::<T>::zeros(samples.len(), 3);
        for (i, z) in samples.iter().enumerate() {
            for (j, p) in [a, b, c].into_iter().enumerate() {
                let f = theta(&(z - p), &self.tau, &self.plan)?
                    * theta(&(z + p), &self.tau, &self.plan)?;
                m[(i, j)] = f;
            }
        }
        homogeneous_lsq(&m)
    }

    /// Riemann addition-formula residual
    /// `|theta(z+a) theta(z-a) - sum_sigma Theta[sigma](a) Theta[sigma](z)|`
    /// relative to `1 + |lhs|`. Cross-validates the first-order engine
    /// against the second-order coordinates.
    pub fn addition_formula_residual(
        &self,
        z: &AbelianPoint<T>,
        a: &AbelianPoint<T>,
    ) -> Result<T> {
        let lhs = theta(&(z + a), &self.tau, &self.plan)?
            * theta(&(z - a), &self.tau, &self.plan)?;
        let ca = self.second_order_coords(a)?;
        let cz = self.second_order_coords(z)?;
        let mut rhs = Complex::new(T::zero(), T::zero());
        for i in 0..ca.len() {
            rhs += ca[i] * cz[i];
        }
        Ok((lhs - rhs).norm() / (T::one() + lhs.norm()))
    }
}

/// Second-order theta basis with first derivatives: values
/// `Theta[sigma](z)` and gradients `d Theta[sigma] / dz_j`.
///
/// Centered section products factorize through the addition formula as
/// `theta(z-u) theta(z+u) = sum_sigma Theta[sigma](z) Theta[sigma](u)`, and
/// the tangency bracket is its `u`-gradient, so fits over moving `(u, v)`
/// reduce to small matrix products against a precomputed sample basis.
pub struct SecondOrderBasis<T: Scalar> {
    tau: RiemannMatrix<T>,
    tau2: RiemannMatrix<T>,
    plan2: EvalPlan<T>,
    half_chars: Vec<RVector<T>>,
    g: usize,
}

impl<T: Scalar> SecondOrderBasis<T> {
    pub fn new(tau: &RiemannMatrix<T>, target_abs_error: T) -> Result<Self> {
        let g = tau.genus();
        let tau2 = tau.doubled();
        let plan2 = EvalPlan::new(&tau2, target_abs_error, 1)?;
        let half = real::<T>(0.5);
        let half_chars = (0..(1usize << g))
            .map(|mask| {
                RVector::from_fn(g, |i, _| if mask >> i & 1 == 1 { half } else { T::zero() })
            })
            .collect();
        Ok(Self {
            tau: tau.clone(),
            tau2,
            plan2,
            half_chars,
            g,
        })
    }

    /// Number of basis sections, `2^g`.
    pub fn len(&self) -> usize {
        1 << self.g
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn phase_and_point(
        &self,
        z: &AbelianPoint<T>,
        zc: &CVector<T>,
        a: &RVector<T>,
    ) -> (Complex<T>, AbelianPoint<T>) {
        // Theta[sigma](z) = exp(i pi a 2tau a + 4 pi i a z) theta(2z + 2tau a | 2tau)
        let g = self.g;
        let mut expo = Complex::new(T::zero(), T::zero());
        for i in 0..g {
            for j in 0..g {
                expo += self.tau2.tau()[(i, j)].scale(a[i] * a[j]);
            }
            let four_a = (a[i] + a[i]) + (a[i] + a[i]);
            expo += zc[i].scale(four_a);
        }
        // expo = a 2tau a + 2 a (2z); multiply by i pi and exponentiate
        let phase = Complex::new(-expo.im * T::pi(), expo.re * T::pi()).exp();
        let w = AbelianPoint::from_xy(z.x() * real::<T>(2.0), z.y() + a);
        (phase, w)
    }

    /// Values `Theta[sigma](z)` for all `sigma`.
    pub fn values(&self, z: &AbelianPoint<T>) -> Result<CVector<T>> {
        let zc = z.to_complex(&self.tau);
        let mut out = CVector::zeros(self.len());
        for (k, a) in self.half_chars.iter().enumerate() {
            let (phase, w) = self.phase_and_point(z, &zc, a);
            out[k] = phase * theta(&w, &self.tau2, &self.plan2)?;
        }
        Ok(out)
    }

    /// Values and gradients: `out.1[(sigma, j)] = d Theta[sigma] / dz_j`.
    pub fn values_and_gradients(
        &self,
        z: &AbelianPoint<T>,
    ) -> Result<(CVector<T>, CMatrix<T>)> {
        let g = self.g;
        let zc = z.to_complex(&self.tau);
        let mut vals = CVector::zeros(self.len());
        let mut grads = CMatrix::zeros(self.len(), g);
        let four_pi_i = Complex::new(T::zero(), T::two_pi() + T::two_pi());
        let mut alpha = vec![0u8; g];
        for (k, a) in self.half_chars.iter().enumerate() {
            let (phase, w) = self.phase_and_point(z, &zc, a);
            let jet = crate::theta::ThetaJet::compute(&w, &self.tau2, &self.plan2, 1)?;
            let tv = jet.value();
            vals[k] = phase * tv;
            for j in 0..g {
                alpha[j] = 1;
                let dj = jet.partial(&alpha);
                alpha[j] = 0;
                // chain rule: the phase carries 4 pi i a_j, the inner
                // argument moves at speed 2
                grads[(k, j)] =
                    phase * (four_pi_i.scale(a[j]) * tv + dj.scale(real(2.0)));
            }
        }
        Ok((vals, grads))
    }
}

/// One-shot Kummer map (see [`KummerEngine::map`] for repeated use).
pub fn kummer_map<T: Scalar>(
    z: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    target_abs_error: T,
) -> Result<KummerVector<T>> {
    KummerEngine::new(tau, target_abs_error)?.map(z)
}

/// One-shot collinearity residual.
pub fn collinearity_residual<T: Scalar>(
    a: &AbelianPoint<T>,
    b: &AbelianPoint<T>,
    c: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    target_abs_error: T,
) -> Result<T> {
    KummerEngine::new(tau, target_abs_error)?.collinearity_residual(a, b, c)
}

/// One-shot section-collinearity fit.
pub fn section_collinearity_fit<T: Scalar>(
    a: &AbelianPoint<T>,
    b: &AbelianPoint<T>,
    c: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    samples: &[AbelianPoint<T>],
    target_abs_error: T,
) -> Result<(CVector<T>, T)> {
    KummerEngine::new(tau, target_abs_error)?.section_collinearity_fit(a, b, c, samples)
}

/// One-shot addition-formula residual.
pub fn addition_formula_residual<T: Scalar>(
    z: &AbelianPoint<T>,
    a: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    target_abs_error: T,
) -> Result<T> {
    KummerEngine::new(tau, target_abs_error)?.addition_formula_residual(z, a)
}
