//! Deterministic low-discrepancy sample sets on the fundamental domain.
//!
//! Uses the additive Kronecker sequence with the generalized golden ratio:
//! in dimension `d` the step vector is `(1/phi, 1/phi^2, ..., 1/phi^d)` where
//! `phi` is the positive root of `x^(d+1) = x + 1`. Seeding offsets the
//! sequence index, so distinct seeds give disjoint deterministic sets.

use crate::scalar::{real, RVector, Scalar};
use crate::siegel::AbelianPoint;

/// Positive root of `x^(d+1) = x + 1` (the `d`-dimensional golden ratio).
fn generalized_golden_ratio(d: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// `count` low-discrepancy points with all fundamental coordinates in
/// `[-1/2, 1/2)`. Deterministic for fixed `(g, count, seed)`.
pub fn fundamental_domain_points<T: Scalar>(
    g: usize,
    count: usize,
    seed: u64,
) -> Vec<AbelianPoint<T>> {
    let d = 2 * g;
    let phi = generalized_golden_ratio(d);
    let alpha: Vec<f64> = (1..=d).map(|j| phi.powi(-(j as i32)).fract()).collect();
    let offset = (seed % 16_384) as f64 * 2_048.0;
    (0..count)
        .map(|k| {
            let idx = offset + 1.0 + k as f64;
            let coord = |j: usize| -> f64 { (0.5 + idx * alpha[j]).fract() - 0.5 };
            let x = RVector::<T>::from_fn(g, |i, _| real(coord(i)));
            let y = RVector::<T>::from_fn(g, |i, _| real(coord(g + i)));
            AbelianPoint::from_xy(x, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_canonical_and_deterministic() {
        let a = fundamental_domain_points::<f64>(2, 64, 3);
        let b = fundamental_domain_points::<f64>(2, 64, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.is_canonical()));
        let c = fundamental_domain_points::<f64>(2, 64, 4);
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn low_discrepancy_covers_all_quadrant_signs() {
        let pts = fundamental_domain_points::<f64>(1, 32, 0);
        let pos_x = pts.iter().filter(|p| p.x()[0] > 0.0).count();
        let pos_y = pts.iter().filter(|p| p.y()[0] > 0.0).count();
        assert!(pos_x > 8 && pos_x < 24);
        assert!(pos_y > 8 && pos_y < 24);
    }
}
