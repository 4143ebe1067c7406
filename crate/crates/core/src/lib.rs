//! Numerical toolkit for Riemann theta functions on principally polarized
//! abelian varieties, with residual-based probes of the trisecant and K-P
//! characterizations of Jacobian period matrices.
//!
//! The crate is generic over the real scalar type (`f64` is the working
//! precision for all shipped tolerances); concrete `f64` aliases live at the
//! crate root.

pub mod divisor;
pub mod error;
pub mod kp;
pub mod kummer;
pub mod sample;
pub mod scalar;
pub mod siegel;
pub mod solver;
pub mod theta;
pub mod trisecant;

pub use error::{CoreError, Result};
pub use scalar::Scalar;

/// Validated period matrix over `f64`.
pub type RiemannMatrix64 = siegel::RiemannMatrix<f64>;
/// Point on the ppav over `f64`.
pub type AbelianPoint64 = siegel::AbelianPoint<f64>;
/// Tangent direction over `f64`.
pub type Direction64 = theta::Direction<f64>;
/// Evaluation plan over `f64`.
pub type EvalPlan64 = theta::EvalPlan<f64>;
/// Kummer engine over `f64`.
pub type KummerEngine64 = kummer::KummerEngine<f64>;
/// Degenerate trisecant configuration over `f64`.
pub type DegenerateConfig64 = trisecant::DegenerateConfig<f64>;
/// Formal curve data over `f64`.
pub type FormalCurveData64 = trisecant::FormalCurveData<f64>;
/// Trisecant triple over `f64`.
pub type TrisecantTriple64 = trisecant::TrisecantTriple<f64>;
/// K-P fit data over `f64`.
pub type KpData64 = kp::KpData<f64>;
