//! Newton location of points on theta divisors and their intersections, and
//! pointwise verification of the divisor-restricted identities: the two
//! order-one consequences of the tangency fit, the epsilon-coefficient
//! identity they imply, the translated-section identity of a collinear
//! triple, and the order-one tangent relation between the two families of a
//! triple.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::scalar::{real, CMatrix, ComplexNorm, CVector, Scalar};
use crate::siegel::{AbelianPoint, RiemannMatrix};
use crate::theta::{theta, theta_deriv, EvalPlan, ThetaJet};
use crate::trisecant::{
    nondegenerate_family_fit, pn_coefficient_with_scale, px_eval, DegenerateConfig,
    FormalCurveData, TrisecantTriple,
};

/// Defining theta values at an accepted point must be below this.
pub const ROOT_TOL: f64 = 1e-10;
/// Newton Jacobians with smallest singular value at or below this signal a
/// nearly degenerate root; such points are discarded.
pub const CONDITION_FLOOR: f64 = 1e-8;
/// Points closer than this (lattice-invariant distance) count as duplicates.
pub const DISTINCT_TOL: f64 = 1e-6;
/// Newton step-norm convergence threshold.
pub const STEP_TOL: f64 = 1e-12;

/// A converged point of the intersection of translated theta divisors.
#[derive(Clone, Debug)]
pub struct DivisorPoint<T: Scalar> {
    pub z: AbelianPoint<T>,
    /// Magnitudes of the defining theta values.
    pub residuals: Vec<T>,
    /// Smallest singular value of the Newton Jacobian at convergence.
    pub condition: T,
}

/// Outcome of a Newton sweep; keeps partial finds so callers can report
/// them even when the requested count was not reached.
#[derive(Clone, Debug)]
pub struct NewtonOutcome<T: Scalar> {
    pub points: Vec<DivisorPoint<T>>,
    pub requested: usize,
    pub starts_used: usize,
}

impl<T: Scalar> NewtonOutcome<T> {
    /// The points, or `InsufficientRoots` when fewer than requested were
    /// found within the start budget.
    pub fn require_complete(self) -> Result<Vec<DivisorPoint<T>>> {
        if self.points.len() < self.requested {
            Err(CoreError::InsufficientRoots {
                found: self.points.len(),
                requested: self.requested,
            })
        } else {
            Ok(self.points)
        }
    }
}

struct NewtonSystem<'a, T: Scalar> {
    shifts: &'a [AbelianPoint<T>],
    slices: Vec<(CVector<T>, Complex<T>)>,
    tau: &'a RiemannMatrix<T>,
    plan: &'a EvalPlan<T>,
}

impl<'a, T: Scalar> NewtonSystem<'a, T> {
    fn eval(&self, z: &CVector<T>) -> Result<CVector<T>> {
        let g = self.tau.genus();
        let pt = AbelianPoint::from_complex(self.tau, z)?;
        let mut f = CVector::<T>::zeros(g);
        for (i, s) in self.shifts.iter().enumerate() {
            f[i] = theta(&(&pt - s), self.tau, self.plan)?;
        }
        for (k, (w, c)) in self.slices.iter().enumerate() {
            let mut acc = *c;
            for j in 0..g {
                acc += w[j] * z[j];
            }
            f[self.shifts.len() + k] = acc;
        }
        Ok(f)
    }

    fn jacobian(&self, z: &CVector<T>) -> Result<CMatrix<T>> {
        let g = self.tau.genus();
        let pt = AbelianPoint::from_complex(self.tau, z)?;
        let mut jac = CMatrix::<T>::zeros(g, g);
        let mut alpha = vec![0u8; g];
        for (i, s) in self.shifts.iter().enumerate() {
            let jet = ThetaJet::compute(&(&pt - s), self.tau, self.plan, 1)?;
            for j in 0..g {
                alpha[j] = 1;
                jac[(i, j)] = jet.partial(&alpha);
                alpha[j] = 0;
            }
        }
        for (k, (w, _)) in self.slices.iter().enumerate() {
            for j in 0..g {
                jac[(self.shifts.len() + k, j)] = w[j];
            }
        }
        Ok(jac)
    }
}

/// Locates distinct points on the common zero locus of
/// `theta(z - shift_i)` by damped Newton iteration from seeded random
/// starts. When fewer shifts than `g` are given, the system is squared with
/// random complex affine slice equations, one fresh slice set per start, so
/// positive-dimensional loci yield as many distinct points as requested.
pub fn newton_on_intersection<T: Scalar>(
    shifts: &[AbelianPoint<T>],
    tau: &RiemannMatrix<T>,
    n_points: usize,
    seed: u64,
    target_abs_error: T,
) -> Result<NewtonOutcome<T>> {
    let g = tau.genus();
    if shifts.is_empty() || shifts.len() > g {
        return Err(CoreError::DimensionMismatch {
            expected: g,
            got: shifts.len(),
        });
    }
    let plan = EvalPlan::new(tau, target_abs_error, 1)?;
    let budget = (40 * n_points).max(64);
    let mut points: Vec<DivisorPoint<T>> = Vec::new();
    let mut starts_used = 0usize;

    for start in 0..budget {
        if points.len() >= n_points {
            break;
        }
        starts_used += 1;
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut slices = Vec::new();
        for _ in shifts.len()..g {
            let w = CVector::<T>::from_fn(g, |_, _| {
                Complex::new(
                    real::<T>(2.0 * rng.gen::<f64>() - 1.0),
                    real::<T>(2.0 * rng.gen::<f64>() - 1.0),
                )
            });
            let through = AbelianPoint::<T>::random_canonical(g, &mut rng).to_complex(tau);
            let mut c = Complex::new(T::zero(), T::zero());
            for j in 0..g {
                c -= w[j] * through[j];
            }
            slices.push((w, c));
        }
        let system = NewtonSystem {
            shifts,
            slices,
            tau,
            plan: &plan,
        };
        let mut z = AbelianPoint::<T>::random_canonical(g, &mut rng).to_complex(tau);
        if let Some(pt) = newton_run(&system, &mut z) {
            let dup = points
                .iter()
                .any(|q| q.z.canonical_distance(&pt.z) <= real(DISTINCT_TOL));
            if !dup {
                points.push(pt);
            }
        }
    }

    Ok(NewtonOutcome {
        points,
        requested: n_points,
        starts_used,
    })
}

fn newton_run<T: Scalar>(sys: &NewtonSystem<'_, T>, z: &mut CVector<T>) -> Option<DivisorPoint<T>> {
    let mut f = sys.eval(z).ok()?;
    let mut fnorm = f.norm();
    let mut converged = false;
    for _ in 0..80 {
        let jac = sys.jacobian(z).ok()?;
        let lu = jac.clone().lu();
        let delta = lu.solve(&(-&f))?;
        // backtracking line search on the residual norm
        let mut lambda = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let zc = &*z + &delta.map(|c| c.scale(lambda));
            if let Ok(fc) = sys.eval(&zc) {
                let fc_norm = fc.norm();
                if fc_norm < fnorm {
                    *z = zc;
                    f = fc;
                    fnorm = fc_norm;
                    improved = true;
                    break;
                }
            }
            lambda *= real(0.5);
        }
        if !improved {
            return None;
        }
        if (delta.norm() * lambda) < real::<T>(STEP_TOL) * (T::one() + z.norm()) {
            converged = true;
            break;
        }
    }
    if !converged && fnorm > real(ROOT_TOL) {
        return None;
    }
    let pt = AbelianPoint::from_complex(sys.tau, z).ok()?;
    let mut residuals = Vec::with_capacity(sys.shifts.len());
    for s in sys.shifts {
        let v = theta(&(&pt - s), sys.tau, sys.plan).ok()?;
        if v.norm() > real(ROOT_TOL) {
            return None;
        }
        residuals.push(v.norm());
    }
    let jac = sys.jacobian(z).ok()?;
    let svd = jac.svd(false, false);
    let condition = svd
        .singular_values
        .iter()
        .cloned()
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if condition <= real(CONDITION_FLOOR) {
        return None;
    }
    Some(DivisorPoint {
        z: pt.canonical(),
        residuals,
        condition,
    })
}

fn guarded_ratio<T: Scalar>(num: T, scale: T) -> T {
    let floor = real::<T>(1e-300);
    if scale <= floor {
        T::zero()
    } else {
        num / scale
    }
}

/// The two order-one identities on `Theta_u` implied by a vanishing
/// tangency functional:
/// `r38 = |theta(z+u) D1 theta(z-u) - theta(z+v) theta(z-v)| / scale` and
/// `r39 = |theta(z-3u) D1 theta(z-u) + theta(z-2u+v) theta(z-2u-v)| / scale`,
/// `scale` being the largest constituent product magnitude.
pub fn check_38_39<T: Scalar>(
    pt: &DivisorPoint<T>,
    cfg: &DegenerateConfig<T>,
    tau: &RiemannMatrix<T>,
    plan: &EvalPlan<T>,
) -> Result<(T, T)> {
    let z = &pt.z;
    let d1 = std::slice::from_ref(&cfg.d1);
    let du_m = theta_deriv(&(z - &cfg.u), tau, d1, plan)?;

    // the bare non-divisor factor enters each scale so configurations whose
    // products all cancel on the divisor read as zero rather than 0/0
    let t_up = theta(&(z + &cfg.u), tau, plan)?;
    let a38 = t_up * du_m;
    let b38 = theta(&(z + &cfg.v), tau, plan)? * theta(&(z - &cfg.v), tau, plan)?;
    let scale38 = a38.norm().max(b38.norm()).max(t_up.norm());
    let r38 = guarded_ratio((a38 - b38).norm(), scale38);

    let z3u = z - &cfg.u.mul_int(3);
    let z2u = z - &cfg.u.mul_int(2);
    let t_3u = theta(&z3u, tau, plan)?;
    let a39 = t_3u * du_m;
    let b39 = theta(&(&z2u + &cfg.v), tau, plan)? * theta(&(&z2u - &cfg.v), tau, plan)?;
    let scale39 = a39.norm().max(b39.norm()).max(t_3u.norm());
    let r39 = guarded_ratio((a39 + b39).norm(), scale39);
    Ok((r38, r39))
}

/// The `eps^n` coefficient of the combined series identity on `Theta_u`:
/// `alpha(eps) R(z,eps) theta(z-3u) D1 theta(z-u)
///  + R(z-2u,eps) theta(z+u) D1 theta(z-u)
///  + eps R(z-u+v,eps) theta(z-v) theta(z-2u-v)`,
/// returned scale-relative. Vanishes order by order for a continued
/// configuration.
pub fn check_combined_series_identity<T: Scalar>(
    pt: &DivisorPoint<T>,
    data: &FormalCurveData<T>,
    u: &AbelianPoint<T>,
    v: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    n: usize,
    plan: &EvalPlan<T>,
) -> Result<T> {
    if n > data.order() {
        return Err(CoreError::OrderExceeded {
            requested: n,
            max: data.order(),
        });
    }
    let z = &pt.z;
    let d1 = std::slice::from_ref(data.dir(1));
    let du_m = theta_deriv(&(z - u), tau, d1, plan)?;
    let outer1 = theta(&(z - &u.mul_int(3)), tau, plan)? * du_m;
    let outer2 = theta(&(z + u), tau, plan)? * du_m;
    let z2u = z - &u.mul_int(2);
    let outer3 = theta(&(z - v), tau, plan)? * theta(&(&z2u - v), tau, plan)?;

    let mut acc = Complex::new(T::zero(), T::zero());
    let mut scale = T::zero();

    // eps^n coefficient of alpha(eps) R(z, eps): sum_j alpha_j R_{n-j}(z)
    for j in 0..n {
        let alpha_j = if j == 0 {
            Complex::new(T::one(), T::zero())
        } else {
            data.alpha(j)
        };
        let (rk, rk_scale) = pn_coefficient_with_scale(n - j, z, data, u, v, tau, plan)?;
        acc += alpha_j * rk * outer1;
        scale = scale.max(alpha_j.norm() * rk_scale * outer1.norm());
    }
    // R_n(z - 2u)
    let (rn, rn_scale) = pn_coefficient_with_scale(n, &z2u, data, u, v, tau, plan)?;
    acc += rn * outer2;
    scale = scale.max(rn_scale * outer2.norm());
    // eps * R(z - u + v, eps): coefficient R_{n-1}
    if n >= 2 {
        let zuv = &(z - u) + v;
        let (rm, rm_scale) = pn_coefficient_with_scale(n - 1, &zuv, data, u, v, tau, plan)?;
        acc += rm * outer3;
        scale = scale.max(rm_scale * outer3.norm());
    }
    Ok(guarded_ratio(acc.norm(), scale))
}

/// The translated-section identity of a collinear triple on `Theta_a`:
/// `P^c(z-a+b) theta(z-b) + P^c(z) theta(z-2a+b)`, scale-relative.
pub fn check_triple_identity<T: Scalar>(
    pt: &DivisorPoint<T>,
    triple: &TrisecantTriple<T>,
    tau: &RiemannMatrix<T>,
    plan: &EvalPlan<T>,
) -> Result<T> {
    let z = &pt.z;
    let (a, b, c) = (&triple.a, &triple.b, &triple.c);
    let pc_z = px_eval(z, c, a, b, c, tau, plan)?;
    let t1 = px_eval(&(&(z - a) + b), c, a, b, c, tau, plan)?
        * theta(&(z - b), tau, plan)?;
    let shift = &a.mul_int(2) - b;
    let t2 = pc_z * theta(&(z - &shift), tau, plan)?;
    let scale = t1.norm().max(t2.norm()).max(pc_z.norm());
    Ok(guarded_ratio((t1 + t2).norm(), scale))
}

/// Pure form of the order-one tangent relation `beta D'_1 = -gamma D_1`:
/// `||beta d1p + gamma d1|| / max(||beta d1p||, ||gamma d1||)`.
pub fn tangent_relation_residual<T: Scalar>(
    beta: Complex<T>,
    gamma: Complex<T>,
    d1: &CVector<T>,
    d1p: &CVector<T>,
) -> T {
    let lhs = d1p.map(|c| c * beta);
    let rhs = d1.map(|c| c * gamma);
    let scale = lhs.norm().max(rhs.norm());
    guarded_ratio((lhs + rhs).norm(), scale)
}

/// Fits the tangents of the two families of a collinear triple and checks
/// the order-one relation between them. The symmetric case `b = c` poses
/// two identical fit problems and returns zero.
pub fn check_tangent_relation<T: Scalar>(
    triple: &TrisecantTriple<T>,
    tau: &RiemannMatrix<T>,
    samples: &[AbelianPoint<T>],
    target_abs_error: T,
) -> Result<T> {
    let (a, b, c) = (&triple.a, &triple.b, &triple.c);
    let (_, d1, _) = nondegenerate_family_fit(a, b, c, tau, samples, target_abs_error)?;
    let (_, d1p, _) = nondegenerate_family_fit(a, c, b, tau, samples, target_abs_error)?;
    let beta = triple.coeffs[1];
    let gamma = triple.coeffs[2];
    Ok(tangent_relation_residual(beta, gamma, &d1, &d1p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::fundamental_domain_points;
    use crate::scalar::cplx;
    use crate::siegel::random_riemann_matrix;
    use crate::theta::Direction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    #[test]
    fn g1_theta_zero_is_recovered() {
        // the classical zero of theta for tau = i sits at (1 + tau) / 2
        let tau =
            RiemannMatrix::validate(CMatrix::from_vec(1, 1, vec![cplx(0.0, 1.0)])).unwrap();
        let out = newton_on_intersection(&[AbelianPoint::zero(1)], &tau, 1, 7, TOL).unwrap();
        let pts = out.require_complete().unwrap();
        let plan = EvalPlan::new(&tau, TOL, 0).unwrap();
        let expected = AbelianPoint::from_xy(
            nalgebra::DVector::from_vec(vec![0.5]),
            nalgebra::DVector::from_vec(vec![0.5]),
        );
        for p in &pts {
            assert!(theta(&p.z, &tau, &plan).unwrap().norm() <= 1e-10);
            assert!(
                p.z.canonical_distance(&expected) <= 1e-8,
                "distance {}",
                p.z.canonical_distance(&expected)
            );
        }
    }

    #[test]
    fn g2_intersection_points_satisfy_both_equations() {
        let tau = random_riemann_matrix::<f64>(2, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let shifts = vec![u.clone(), -&u];
        let out = newton_on_intersection(&shifts, &tau, 2, 3, TOL).unwrap();
        assert!(!out.points.is_empty(), "no intersection points found");
        let plan = EvalPlan::new(&tau, TOL, 1).unwrap();
        for p in &out.points {
            assert!(theta(&(&p.z - &u), &tau, &plan).unwrap().norm() <= 1e-10);
            assert!(theta(&(&p.z + &u), &tau, &plan).unwrap().norm() <= 1e-10);
            // parity: -z also solves the system (the two equations swap)
            let neg = -&p.z;
            assert!(theta(&(&neg - &u), &tau, &plan).unwrap().norm() <= 1e-9);
            assert!(theta(&(&neg + &u), &tau, &plan).unwrap().norm() <= 1e-9);
        }
    }

    #[test]
    fn points_are_converged_fixed_points() {
        let tau = random_riemann_matrix::<f64>(2, 51).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let shifts = vec![u.clone(), -&u];
        let out = newton_on_intersection(&shifts, &tau, 1, 5, TOL).unwrap();
        let plan = EvalPlan::new(&tau, TOL, 1).unwrap();
        for p in &out.points {
            // one extra Newton step moves the point by less than 1e-11
            let sys = NewtonSystem {
                shifts: &shifts,
                slices: vec![],
                tau: &tau,
                plan: &plan,
            };
            let z = p.z.to_complex(&tau);
            let f = sys.eval(&z).unwrap();
            let jac = sys.jacobian(&z).unwrap();
            let delta = jac.lu().solve(&(-&f)).unwrap();
            assert!(delta.norm() < 1e-11, "extra step {}", delta.norm());
        }
    }

    #[test]
    fn newton_is_deterministic_for_fixed_seed() {
        let tau = random_riemann_matrix::<f64>(2, 52).unwrap();
        let out1 = newton_on_intersection(&[AbelianPoint::zero(2)], &tau, 4, 11, TOL).unwrap();
        let out2 = newton_on_intersection(&[AbelianPoint::zero(2)], &tau, 4, 11, TOL).unwrap();
        assert_eq!(out1.points.len(), out2.points.len());
        for (a, b) in out1.points.iter().zip(out2.points.iter()) {
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn g2_double_intersection_count_saturates() {
        // Theta_u intersect Theta_{-u} is 0-dimensional for g = 2; the count
        // of distinct points stabilizes as the start budget doubles
        let tau = random_riemann_matrix::<f64>(2, 53).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let shifts = vec![u.clone(), -&u];
        let small = newton_on_intersection(&shifts, &tau, 8, 17, TOL).unwrap();
        let large = newton_on_intersection(&shifts, &tau, 16, 17, TOL).unwrap();
        assert!(!small.points.is_empty());
        assert_eq!(
            small.points.len(),
            large.points.len(),
            "count must saturate: {} vs {}",
            small.points.len(),
            large.points.len()
        );
    }

    #[test]
    fn exact_vanishing_config_satisfies_38() {
        // v = u, alpha_1 = -1, D_1 = 0: r38 degenerates to |theta(z-u)|/scale
        let tau = random_riemann_matrix::<f64>(2, 54).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let cfg = DegenerateConfig {
            u: u.clone(),
            v: u.clone(),
            alpha1: cplx(-1.0, 0.0),
            d1: Direction::zero(2),
        };
        let out = newton_on_intersection(&[u.clone()], &tau, 3, 19, TOL).unwrap();
        let plan = EvalPlan::new(&tau, TOL, 1).unwrap();
        for p in &out.points {
            let (r38, _r39) = check_38_39(p, &cfg, &tau, &plan).unwrap();
            // with D1 = 0 the first product vanishes; scale comes from the
            // second, so r38 measures |theta(z+u) theta(z-u)| / |...| = tiny
            assert!(r38 <= 1e-8, "r38 = {r38}");
        }
    }

    #[test]
    fn combined_identity_trivial_data_is_zero() {
        let tau = random_riemann_matrix::<f64>(2, 55).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let cfg = DegenerateConfig {
            u: u.clone(),
            v: u.clone(),
            alpha1: cplx(-1.0, 0.0),
            d1: Direction::zero(2),
        };
        let mut data = FormalCurveData::from_config(&cfg);
        data.push_order(cplx(0.0, 0.0), Direction::zero(2));
        let out = newton_on_intersection(&[u.clone()], &tau, 2, 23, TOL).unwrap();
        let plan = EvalPlan::new(&tau, TOL, 2).unwrap();
        for p in &out.points {
            let r = check_combined_series_identity(p, &data, &cfg.u, &cfg.v, &tau, 2, &plan)
                .unwrap();
            assert!(r <= 1e-9, "trivial data residual {r}");
        }
    }

    #[test]
    fn triple_identity_b_equals_a_vanishes_on_divisor() {
        let tau = random_riemann_matrix::<f64>(2, 56).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let c = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let mut coeffs = CVector::<f64>::zeros(3);
        coeffs[0] = cplx(1.0, 0.0);
        coeffs[1] = cplx(-1.0, 0.0);
        let triple = TrisecantTriple {
            a: a.clone(),
            b: a.clone(),
            c,
            coeffs,
            residual: 0.0,
        };
        let out = newton_on_intersection(&[a.clone()], &tau, 3, 29, TOL).unwrap();
        let plan = EvalPlan::new(&tau, TOL, 0).unwrap();
        for p in &out.points {
            let r = check_triple_identity(p, &triple, &tau, &plan).unwrap();
            assert!(r <= 1e-8, "b = a residual {r}");
        }
    }

    #[test]
    fn tangent_relation_symmetric_and_antipodal_cases() {
        let tau = random_riemann_matrix::<f64>(2, 57).unwrap();
        let samples = fundamental_domain_points::<f64>(2, 48, 31);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        let b = AbelianPoint::<f64>::random_canonical(2, &mut rng);
        // b = c: the two fits are the same problem
        let mut coeffs = CVector::<f64>::zeros(3);
        coeffs[1] = cplx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        coeffs[2] = cplx(-std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let triple = TrisecantTriple {
            a: a.clone(),
            b: b.clone(),
            c: b.clone(),
            coeffs,
            residual: 0.0,
        };
        let r = check_tangent_relation(&triple, &tau, &samples, TOL).unwrap();
        assert!(r <= 1e-10, "symmetric case residual {r}");

        // negated tangent: antipodal alignment failure sits at exactly 2
        let d1 = CVector::from_vec(vec![cplx::<f64>(0.4, 0.1), cplx(-0.3, 0.2)]);
        let r2 = tangent_relation_residual(cplx(1.0, 0.0), cplx(1.0, 0.0), &d1, &d1.map(|c| c));
        // beta d1p = d1, gamma d1 = d1 -> ||2 d1|| / ||d1|| = 2
        assert!((r2 - 2.0).abs() < 1e-12);
    }
}
