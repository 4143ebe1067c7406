//! Dense nonlinear least squares: SVD-backed linear solves,
//! Levenberg-Marquardt with forward-difference Jacobians and optional gauge
//! projection, and deterministic multi-start orchestration.
//!
//! Complex unknowns are packed as interleaved `(re, im)` real coordinates
//! throughout the crate; the optimizer itself only sees real vectors.


use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::scalar::{real, CMatrix, CVector, RMatrix, RVector, Scalar};

/// Solves `min_x ||A x + b||` by SVD. Returns `(x, ||Ax+b|| / ||b||)`.
pub fn linear_lsq<T: Scalar>(a: &CMatrix<T>, b: &CVector<T>) -> Result<(CVector<T>, T)> {
    let (m, n) = a.shape();
    if m < n || n == 0 {
        return Err(CoreError::TooFewSamples { needed: n, got: m });
    }
    let b_norm = b.norm();
    if b_norm == T::zero() {
        return Ok((CVector::zeros(n), T::zero()));
    }
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&(-b), real(1e-300))
        .map(|m| CVector::from_column_slice(m.as_slice()))
        .unwrap_or_else(|_| CVector::zeros(n));
    let res = (a * &x + b).norm();
    Ok((x, res / b_norm))
}

/// [`linear_lsq`] through the normal equations: fast path for tall,
/// well-conditioned systems (the residual landscapes here are built from
/// O(1) independent section products). Falls back to the SVD route when the
/// Gram matrix is not numerically positive definite.
pub fn linear_lsq_normal<T: Scalar>(a: &CMatrix<T>, b: &CVector<T>) -> Result<(CVector<T>, T)> {
    let (m, n) = a.shape();
    if m < n || n == 0 {
        return Err(CoreError::TooFewSamples { needed: n, got: m });
    }
    let b_norm = b.norm();
    if b_norm == T::zero() {
        return Ok((CVector::zeros(n), T::zero()));
    }
    let ah = a.adjoint();
    let gram = &ah * a;
    let rhs = &ah * &(-b);
    match gram.cholesky() {
        Some(ch) => {
            let x = ch.solve(&rhs);
            let res = (a * &x + b).norm();
            Ok((x, res / b_norm))
        }
        None => linear_lsq(a, b),
    }
}

/// Homogeneous least squares: the right singular vector of the smallest
/// singular value of `A`, with `sigma_min / sigma_max` as residual ratio.
pub fn homogeneous_lsq<T: Scalar>(a: &CMatrix<T>) -> Result<(CVector<T>, T)> {
    let (m, n) = a.shape();
    if m < n || n == 0 {
        return Err(CoreError::TooFewSamples { needed: n, got: m });
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^H");
    let sv = &svd.singular_values;
    let mut min_i = 0usize;
    for i in 0..sv.len() {
        if sv[i] < sv[min_i] {
            min_i = i;
        }
    }
    let sigma_max = sv.iter().cloned().fold(T::zero(), |a, b| a.max(b));
    // rows of V^H are conjugated right singular vectors
    let x = CVector::from_fn(n, |j, _| v_t[(min_i, j)].conj());
    let ratio = if sigma_max > T::zero() {
        sv[min_i] / sigma_max
    } else {
        T::zero()
    };
    Ok((x, ratio))
}

/// Ratio `sigma_min / sigma_max` of a matrix (rank diagnostics).
pub fn sv_ratio<T: Scalar>(a: &CMatrix<T>) -> T {
    let svd = a.clone().svd(false, false);
    let sv = &svd.singular_values;
    let mut lo = sv[0];
    let mut hi = sv[0];
    for i in 1..sv.len() {
        lo = lo.min(sv[i]);
        hi = hi.max(sv[i]);
    }
    if hi > T::zero() {
        lo / hi
    } else {
        T::zero()
    }
}

/// Options for [`levenberg_marquardt`].
#[derive(Clone, Debug)]
pub struct LmOptions<T: Scalar> {
    pub max_iter: usize,
    /// Stop when the relative decrease of the residual norm falls below this.
    pub ftol: T,
    /// Stop when the step norm falls below `xtol * (1 + ||x||)`.
    pub xtol: T,
    /// Initial damping.
    pub lambda0: T,
}

impl<T: Scalar> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 150,
            ftol: real(1e-12),
            xtol: real(1e-12),
            lambda0: real(1e-3),
        }
    }
}

/// Why the optimizer stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmTermination {
    /// Relative decrease below `ftol`.
    Ftol,
    /// Step shorter than `xtol`.
    Xtol,
    /// Iteration budget exhausted.
    MaxIter,
    /// Damping grew past its cap without an acceptable step.
    Stalled,
}

/// Result of one Levenberg-Marquardt run.
#[derive(Clone, Debug)]
pub struct LmOutcome<T: Scalar> {
    pub x: RVector<T>,
    /// Final residual 2-norm.
    pub norm: T,
    /// Number of accepted steps.
    pub iters: usize,
    /// Residual norms of the accepted iterates, starting with the initial one.
    pub accepted_norms: Vec<T>,
    pub termination: LmTermination,
}

fn check_finite<T: Scalar>(r: &RVector<T>) -> Result<()> {
    for (i, v) in r.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::NonFiniteResidual { index: i });
        }
    }
    Ok(())
}

/// Dense Levenberg-Marquardt with numeric Jacobians.
///
/// The Jacobian is formed by forward differences with step
/// `1e-7 * (1 + |x_j|)`; damping is adapted by factors of 10 on
/// reject/accept. `project`, when given, maps每 candidate onto the gauge
/// slice before evaluation, so constraint surfaces like "unit norm, fixed
/// phase" are enforced by projection rather than penalty. Accepted residual
/// norms are non-increasing by construction.
///
/// A non-finite residual at the starting point (or while probing the
/// Jacobian) aborts with [`CoreError::NonFiniteResidual`]; a non-finite trial
/// step is treated as a rejected step instead.
pub fn levenberg_marquardt<T, F>(
    residual: &F,
    x0: &RVector<T>,
    opts: &LmOptions<T>,
    project: Option<&(dyn Fn(&mut RVector<T>) + Sync)>,
) -> Result<LmOutcome<T>>
where
    T: Scalar,
    F: Fn(&RVector<T>) -> Result<RVector<T>> + Sync,
{
    let n = x0.len();
    let mut x = x0.clone();
    if let Some(p) = project {
        p(&mut x);
    }
    let mut r = residual(&x)?;
    check_finite(&r)?;
    let mut norm = r.norm();
    let mut accepted_norms = vec![norm];
    let mut lambda = opts.lambda0;
    let lambda_cap = real::<T>(1e16);
    let lambda_floor = real::<T>(1e-12);
    let mut iters = 0usize;
    let mut termination = LmTermination::MaxIter;

    'outer: while iters < opts.max_iter {
        // forward-difference Jacobian
        let m = r.len();
        let mut jac = RMatrix::<T>::zeros(m, n);
        for j in 0..n {
            let h = real::<T>(1e-7) * (T::one() + x[j].abs());
            let mut xh = x.clone();
            xh[j] += h;
            let rh = residual(&xh)?;
            check_finite(&rh)?;
            for i in 0..m {
                jac[(i, j)] = (rh[i] - r[i]) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        loop {
            let mut damped = jtj.clone();
            for i in 0..n {
                let d = jtj[(i, i)].max(real(1e-12));
                damped[(i, i)] += lambda * d;
            }
            let delta = match damped.cholesky() {
                Some(ch) => -ch.solve(&jtr),
                None => {
                    lambda *= real(10.0);
                    if lambda > lambda_cap {
                        termination = LmTermination::Stalled;
                        break 'outer;
                    }
                    continue;
                }
            };
            let step = delta.norm();
            let mut xc = &x + &delta;
            if let Some(p) = project {
                p(&mut xc);
            }
            let rc = residual(&xc);
            let accept = match &rc {
                Ok(v) => v.iter().all(|t| t.is_finite()) && v.norm() < norm,
                Err(_) => false,
            };
            if accept {
                let rc = rc.unwrap();
                let prev = norm;
                x = xc;
                norm = rc.norm();
                r = rc;
                accepted_norms.push(norm);
                iters += 1;
                lambda = (lambda / real(10.0)).max(lambda_floor);
                if prev - norm <= opts.ftol * prev {
                    termination = LmTermination::Ftol;
                    break 'outer;
                }
                if step <= opts.xtol * (T::one() + x.norm()) {
                    termination = LmTermination::Xtol;
                    break 'outer;
                }
                break;
            } else {
                if step <= opts.xtol * (T::one() + x.norm()) {
                    termination = LmTermination::Xtol;
                    break 'outer;
                }
                lambda *= real(10.0);
                if lambda > lambda_cap {
                    termination = LmTermination::Stalled;
                    break 'outer;
                }
            }
        }
    }

    Ok(LmOutcome {
        x,
        norm,
        iters,
        accepted_norms,
        termination,
    })
}

/// All results of a multi-start run, best first by `(norm, start index)`.
#[derive(Debug)]
pub struct MultiStartOutcome<T: Scalar> {
    pub best: LmOutcome<T>,
    pub best_index: usize,
    pub all: Vec<Result<LmOutcome<T>>>,
}

/// Runs [`levenberg_marquardt`] from `n_starts` sampled starting points in
/// parallel. Deterministic for a deterministic sampler; fails only if every
/// start fails.
pub fn multi_start<T, F, S>(
    residual: &F,
    sampler: &S,
    n_starts: usize,
    opts: &LmOptions<T>,
    project: Option<&(dyn Fn(&mut RVector<T>) + Sync)>,
) -> Result<MultiStartOutcome<T>>
where
    T: Scalar,
    F: Fn(&RVector<T>) -> Result<RVector<T>> + Sync,
    S: Fn(usize) -> RVector<T> + Sync,
{
    assert!(n_starts >= 1, "n_starts must be at least 1");
    let all: Vec<Result<LmOutcome<T>>> = (0..n_starts)
        .into_par_iter()
        .map(|i| levenberg_marquardt(residual, &sampler(i), opts, project))
        .collect();
    let mut best_index: Option<usize> = None;
    let mut best_norm = T::zero();
    for (i, res) in all.iter().enumerate() {
        if let Ok(out) = res {
            if best_index.is_none() || out.norm < best_norm {
                best_index = Some(i);
                best_norm = out.norm;
            }
        }
    }
    match best_index {
        Some(i) => Ok(MultiStartOutcome {
            best: match &all[i] {
                Ok(out) => out.clone(),
                Err(_) => unreachable!("best index always points at a success"),
            },
            best_index: i,
            all,
        }),
        None => {
            // every start failed; surface the first failure
            let first = all.into_iter().find_map(|r| r.err()).unwrap();
            Err(first)
        }
    }
}
