//! The K-P equation as a residual functional, the gauge-fixed nonlinear fit
//! for its data `(D_1, D_2, D_3, d_3)`, and the step-1 identity on the theta
//! divisor.
//!
//! The functional is quasi-homogeneous of weight 4 under
//! `(D_1, D_2, D_3, d_3) -> (l D_1, l^2 D_2, l^3 D_3, l^4 d_3)`; the fit
//! removes that gauge by projecting `D_1` to unit norm with its leading
//! component real positive. Given `(D_1, D_2)` the functional is linear in
//! `(D_3, d_3)`, so the fit solves that inner problem exactly per evaluation
//! and optimizes only over `(D_1, D_2)`.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::divisor::DivisorPoint;
use crate::scalar::{real, CMatrix, ComplexNorm, CVector, RVector, Scalar};
use crate::siegel::{AbelianPoint, RiemannMatrix};
use crate::solver::{linear_lsq_normal, multi_start, LmOptions};
use crate::theta::{theta_deriv_raw, Direction, EvalPlan, ThetaJet};

/// Solution data of the K-P equation.
#[derive(Clone, Debug)]
pub struct KpData<T: Scalar> {
    pub d1: Direction<T>,
    pub d2: Direction<T>,
    pub d3: Direction<T>,
    pub d3_const: Complex<T>,
}

impl<T: Scalar> KpData<T> {
    pub fn zero(g: usize) -> Self {
        Self {
            d1: Direction::zero(g),
            d2: Direction::zero(g),
            d3: Direction::zero(g),
            d3_const: Complex::new(T::zero(), T::zero()),
        }
    }

    /// Applies the weight-(1,2,3,4) gauge action.
    pub fn gauged(&self, lambda: Complex<T>) -> Self {
        let l2 = lambda * lambda;
        let l3 = l2 * lambda;
        let l4 = l2 * l2;
        Self {
            d1: self.d1.scale(lambda),
            d2: self.d2.scale(l2),
            d3: self.d3.scale(l3),
            d3_const: self.d3_const * l4,
        }
    }

    /// Gauge-fixed representative: `||D_1|| = 1` with the leading component
    /// real positive. Identity when `D_1 = 0`.
    pub fn gauge_fixed(&self) -> Self {
        let norm = self.d1.norm();
        if norm <= T::zero() {
            return self.clone();
        }
        let v = self.d1.vector();
        let lead = (0..v.len())
            .find(|&i| v[i].norm() > norm * real(1e-9))
            .unwrap_or(0);
        let phase = v[lead] / Complex::new(v[lead].norm(), T::zero());
        let lambda = phase.conj() / Complex::new(norm, T::zero());
        self.gauged(lambda)
    }
}

/// Derivative bundle of one theta jet against fixed K-P data.
struct KpTerms<T: Scalar> {
    f0: Complex<T>,
    f1: Complex<T>,
    f2: Complex<T>,
    f3: Complex<T>,
    f4: Complex<T>,
    g1: Complex<T>,
    g2: Complex<T>,
}

impl<T: Scalar> KpTerms<T> {
    fn new(jet: &ThetaJet<T>, d1: &CVector<T>, d2: &CVector<T>) -> Self {
        Self {
            f0: jet.value(),
            f1: jet.contract_power(d1, 1),
            f2: jet.contract_power(d1, 2),
            f3: jet.contract_power(d1, 3),
            f4: jet.contract_power(d1, 4),
            g1: jet.contract_power(d2, 1),
            g2: jet.contract_power(d2, 2),
        }
    }

    /// The part of the K-P expression not involving `(D_3, d_3)`.
    fn head(&self) -> Complex<T> {
        let three = real::<T>(3.0);
        let four = real::<T>(4.0);
        self.f4 * self.f0 - (self.f3 * self.f1).scale(four)
            + (self.f2 * self.f2).scale(three)
            - (self.g1 * self.g1).scale(three)
            + (self.g2 * self.f0).scale(three)
    }
}

/// Value of the K-P expression
/// `D1^4T T - 4 D1^3T D1T + 3 (D1^2T)^2 - 3 (D2T)^2 + 3 D2^2T T
///  + 3 D1T D3T - 3 D1D3T T + d3 T^2` at `z`.
pub fn kp_residual<T: Scalar>(
    z: &AbelianPoint<T>,
    tau: &RiemannMatrix<T>,
    kp: &KpData<T>,
    plan: &EvalPlan<T>,
) -> Result<Complex<T>> {
    let jet = ThetaJet::compute(z, tau, plan, 4)?;
    Ok(kp_expression(&jet, kp))
}

pub(crate) fn kp_expression<T: Scalar>(jet: &ThetaJet<T>, kp: &KpData<T>) -> Complex<T> {
    let t = KpTerms::new(jet, kp.d1.vector(), kp.d2.vector());
    let three = real::<T>(3.0);
    let h1 = jet.contract_power(kp.d3.vector(), 1);
    let m1 = jet.contract(&[kp.d1.vector(), kp.d3.vector()]);
    t.head() + (t.f1 * h1).scale(three) - (m1 * t.f0).scale(three) + kp.d3_const * t.f0 * t.f0
}

/// Result of [`kp_fit`].
#[derive(Clone, Debug)]
pub struct KpFitOutcome<T: Scalar> {
    pub data: KpData<T>,
    /// Normalized residual `sqrt(sum |P(z_i)|^2 / (N * scale))` with
    /// `scale = mean |theta(z_i)|^4 + floor`.
    pub residual: T,
}

fn theta4_scale<T: Scalar>(jets: &[ThetaJet<T>]) -> T {
    let mut acc = T::zero();
    for j in jets {
        let m = j.value().norm();
        acc += m * m * m * m;
    }
    acc / real(jets.len() as f64) + real(1e-300)
}

struct KpProblem<'a, T: Scalar> {
    jets: &'a [ThetaJet<T>],
    g: usize,
    active: &'a [usize],
    denom: T,
}

impl<'a, T: Scalar> KpProblem<'a, T> {
    fn unpack(&self, p: &RVector<T>) -> (CVector<T>, CVector<T>) {
        let na = self.active.len();
        let mut d1 = CVector::<T>::zeros(self.g);
        let mut d2 = CVector::<T>::zeros(self.g);
        for (k, &i) in self.active.iter().enumerate() {
            d1[i] = Complex::new(p[2 * k], p[2 * k + 1]);
            d2[i] = Complex::new(p[2 * na + 2 * k], p[2 * na + 2 * k + 1]);
        }
        (d1, d2)
    }

    fn pack(&self, d1: &CVector<T>, d2: &CVector<T>) -> RVector<T> {
        let na = self.active.len();
        let mut p = RVector::<T>::zeros(4 * na);
        for (k, &i) in self.active.iter().enumerate() {
            p[2 * k] = d1[i].re;
            p[2 * k + 1] = d1[i].im;
            p[2 * na + 2 * k] = d2[i].re;
            p[2 * na + 2 * k + 1] = d2[i].im;
        }
        p
    }

    /// Exact inner solve for `(D_3, d_3)` given `(D_1, D_2)`.
    fn inner_solve(&self, d1: &CVector<T>, d2: &CVector<T>) -> Result<(CVector<T>, CVector<T>)> {
        let n = self.jets.len();
        let na = self.active.len();
        let mut a = CMatrix::<T>::zeros(n, na + 1);
        let mut k = CVector::<T>::zeros(n);
        let three = real::<T>(3.0);
        let mut e_j = CVector::<T>::zeros(self.g);
        for (i, jet) in self.jets.iter().enumerate() {
            let t = KpTerms::new(jet, d1, d2);
            k[i] = t.head();
            for (col, &j) in self.active.iter().enumerate() {
                e_j[j] = Complex::new(T::one(), T::zero());
                let dd = jet.contract(&[d1, &e_j]);
                let dj = jet.contract_power(&e_j, 1);
                a[(i, col)] = (t.f1 * dj).scale(three) - (dd * t.f0).scale(three);
                e_j[j] = Complex::new(T::zero(), T::zero());
            }
            a[(i, na)] = t.f0 * t.f0;
        }
        let (x, _) = linear_lsq_normal(&a, &k)?;
        let rvec = (&a * &x + &k).map(|c| c.unscale(self.denom));
        Ok((x, rvec))
    }

    fn residual(&self, p: &RVector<T>) -> Result<RVector<T>> {
        let (d1, d2) = self.unpack(p);
        let (_, rvec) = self.inner_solve(&d1, &d2)?;
        let mut out = RVector::<T>::zeros(2 * rvec.len());
        for (i, c) in rvec.iter().enumerate() {
            out[2 * i] = c.re;
            out[2 * i + 1] = c.im;
        }
        Ok(out)
    }

    fn project(&self, p: &mut RVector<T>) {
        let (d1, d2) = self.unpack(p);
        let probe = KpData {
            d1: Direction::new(d1),
            d2: Direction::new(d2),
            d3: Direction::zero(self.g),
            d3_const: Complex::new(T::zero(), T::zero()),
        };
        let fixed = probe.gauge_fixed();
        *p = self.pack(fixed.d1.vector(), fixed.d2.vector());
    }
}

/// Gauge-fixed multi-start fit of the K-P data on a sample set.
pub fn kp_fit<T: Scalar>(
    tau: &RiemannMatrix<T>,
    samples: &[AbelianPoint<T>],
    n_starts: usize,
    seed: u64,
    target_abs_error: T,
) -> Result<KpFitOutcome<T>> {
    kp_fit_constrained(tau, samples, n_starts, seed, target_abs_error, None)
}

/// [`kp_fit`] with the tangent directions constrained to a coordinate
/// subset (used to compare against the standalone fit of a diagonal block).
pub fn kp_fit_constrained<T: Scalar>(
    tau: &RiemannMatrix<T>,
    samples: &[AbelianPoint<T>],
    n_starts: usize,
    seed: u64,
    target_abs_error: T,
    active: Option<&[usize]>,
) -> Result<KpFitOutcome<T>> {
    let g = tau.genus();
    let needed = 8 * (3 * g + 1);
    if samples.len() < needed {
        return Err(CoreError::TooFewSamples {
            needed,
            got: samples.len(),
        });
    }
    let all: Vec<usize> = (0..g).collect();
    let active: Vec<usize> = active.map(|a| a.to_vec()).unwrap_or(all);
    let plan = EvalPlan::new(tau, target_abs_error, 4)?;
    let jets: Vec<ThetaJet<T>> = samples
        .par_iter()
        .map(|z| ThetaJet::compute(z, tau, &plan, 4))
        .collect::<Result<Vec<_>>>()?;
    let scale = theta4_scale(&jets);
    let denom = (scale * real(samples.len() as f64)).sqrt();
    let problem = KpProblem {
        jets: &jets,
        g,
        active: &active,
        denom,
    };

    let residual = |p: &RVector<T>| problem.residual(p);
    let project = |p: &mut RVector<T>| problem.project(p);
    let na = active.len();
    let sampler = |i: usize| -> RVector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut p = RVector::<T>::zeros(4 * na);
        for k in 0..(2 * na) {
            p[k] = real(2.0 * rng.gen::<f64>() - 1.0);
        }
        for k in (2 * na)..(4 * na) {
            p[k] = real(rng.gen::<f64>() - 0.5);
        }
        p
    };
    let opts = LmOptions {
        max_iter: 200,
        ..LmOptions::default()
    };
    let outcome = multi_start(&residual, &sampler, n_starts, &opts, Some(&project))?;

    let (d1, d2) = problem.unpack(&outcome.best.x);
    let (x, rvec) = problem.inner_solve(&d1, &d2)?;
    let mut d3 = CVector::<T>::zeros(g);
    for (k, &i) in active.iter().enumerate() {
        d3[i] = x[k];
    }
    let data = KpData {
        d1: Direction::new(d1),
        d2: Direction::new(d2),
        d3: Direction::new(d3),
        d3_const: x[active.len()],
    }
    .gauge_fixed();
    Ok(KpFitOutcome {
        data,
        residual: rvec.norm(),
    })
}

/// Normalized K-P residual of fixed data on a (fresh) sample set; used for
/// revalidation without refitting.
pub fn kp_residual_rms<T: Scalar>(
    tau: &RiemannMatrix<T>,
    samples: &[AbelianPoint<T>],
    kp: &KpData<T>,
    target_abs_error: T,
) -> Result<T> {
    let plan = EvalPlan::new(tau, target_abs_error, 4)?;
    let jets: Vec<ThetaJet<T>> = samples
        .par_iter()
        .map(|z| ThetaJet::compute(z, tau, &plan, 4))
        .collect::<Result<Vec<_>>>()?;
    let scale = theta4_scale(&jets);
    let mut acc = T::zero();
    for jet in &jets {
        let p = kp_expression(jet, kp);
        acc += p.norm_sqr();
    }
    Ok((acc / (scale * real(samples.len() as f64))).sqrt())
}

/// Step-1 identity on the theta divisor:
/// `max over points of |D1 P . D1 theta - P . D1^2 theta| / scale`, where
/// `P` is the K-P expression as a function of `z` and `D1 P` is assembled
/// term by term with one extra analytic directional derivative (individual
/// factors up to order five; the plan must have been built with
/// `deriv_order >= 5`, the single scoped extension of the engine ceiling).
pub fn step1_check<T: Scalar>(
    tau: &RiemannMatrix<T>,
    kp: &KpData<T>,
    points: &[DivisorPoint<T>],
    plan: &EvalPlan<T>,
) -> Result<T> {
    if plan.deriv_order() < 5 {
        return Err(CoreError::OrderExceeded {
            requested: 5,
            max: plan.deriv_order(),
        });
    }
    let mut worst = T::zero();
    for pt in points {
        let z = &pt.z;
        let dv = |dirs: &[&Direction<T>]| -> Result<Complex<T>> {
            let owned: Vec<Direction<T>> = dirs.iter().map(|d| (*d).clone()).collect();
            theta_deriv_raw(z, tau, &owned, plan)
        };
        let (d1, d2, d3) = (&kp.d1, &kp.d2, &kp.d3);
        let f = [
            dv(&[])?,
            dv(&[d1])?,
            dv(&[d1, d1])?,
            dv(&[d1, d1, d1])?,
            dv(&[d1, d1, d1, d1])?,
            dv(&[d1, d1, d1, d1, d1])?,
        ];
        let g1 = dv(&[d2])?;
        let dg1 = dv(&[d1, d2])?;
        let g2 = dv(&[d2, d2])?;
        let dg2 = dv(&[d1, d2, d2])?;
        let h1 = dv(&[d3])?;
        let m1 = dv(&[d1, d3])?;
        let dm1 = dv(&[d1, d1, d3])?;

        let mut p = Complex::new(T::zero(), T::zero());
        let mut dp = Complex::new(T::zero(), T::zero());
        let mut scale = T::zero();
        let mut term = |c: Complex<T>,
                        a: Complex<T>,
                        da: Complex<T>,
                        b: Complex<T>,
                        db: Complex<T>| {
            p += c * a * b;
            dp += c * (da * b + a * db);
            let cn = c.norm();
            scale = scale
                .max(cn * da.norm() * b.norm() * f[1].norm())
                .max(cn * a.norm() * db.norm() * f[1].norm())
                .max(cn * a.norm() * b.norm() * f[2].norm());
        };
        let one = Complex::new(T::one(), T::zero());
        let three = Complex::new(real::<T>(3.0), T::zero());
        let four = Complex::new(real::<T>(4.0), T::zero());
        term(one, f[4], f[5], f[0], f[1]);
        term(-four, f[3], f[4], f[1], f[2]);
        term(three, f[2], f[3], f[2], f[3]);
        term(-three, g1, dg1, g1, dg1);
        term(three, g2, dg2, f[0], f[1]);
        term(three, f[1], f[2], h1, m1);
        term(-three, m1, dm1, f[0], f[1]);
        term(kp.d3_const, f[0], f[1], f[0], f[1]);

        let value = (dp * f[1] - p * f[2]).norm();
        let r = if scale <= real(1e-300) {
            T::zero()
        } else {
            value / scale
        };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// JSON form of a K-P fit; complex numbers as `[re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KpFile {
    pub d1: Vec<[f64; 2]>,
    pub d2: Vec<[f64; 2]>,
    pub d3: Vec<[f64; 2]>,
    pub d3_const: [f64; 2],
    pub residual: f64,
    pub g: usize,
    pub seed: u64,
}

impl KpFile {
    pub fn from_outcome<T: Scalar>(out: &KpFitOutcome<T>, g: usize, seed: u64) -> Self {
        let grab = |d: &Direction<T>| -> Vec<[f64; 2]> {
            d.vector()
                .iter()
                .map(|c| {
                    [
                        c.re.to_f64().unwrap_or(f64::NAN),
                        c.im.to_f64().unwrap_or(f64::NAN),
                    ]
                })
                .collect()
        };
        Self {
            d1: grab(&out.data.d1),
            d2: grab(&out.data.d2),
            d3: grab(&out.data.d3),
            d3_const: [
                out.data.d3_const.re.to_f64().unwrap_or(f64::NAN),
                out.data.d3_const.im.to_f64().unwrap_or(f64::NAN),
            ],
            residual: out.residual.to_f64().unwrap_or(f64::NAN),
            g,
            seed,
        }
    }

    pub fn to_data<T: Scalar>(&self) -> Result<KpData<T>> {
        let grab = |v: &Vec<[f64; 2]>| -> CVector<T> {
            CVector::from_fn(v.len(), |i, _| Complex::new(real(v[i][0]), real(v[i][1])))
        };
        if self.d1.len() != self.g || self.d2.len() != self.g || self.d3.len() != self.g {
            return Err(CoreError::InvalidFile {
                reason: "K-P data dimensions do not match the stored genus".into(),
            });
        }
        Ok(KpData {
            d1: Direction::new(grab(&self.d1)),
            d2: Direction::new(grab(&self.d2)),
            d3: Direction::new(grab(&self.d3)),
            d3_const: Complex::new(real(self.d3_const[0]), real(self.d3_const[1])),
        })
    }
}
