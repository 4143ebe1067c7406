// temporary timing probe (deleted before ship)
use schottky_core::sample::fundamental_domain_points;
use schottky_core::siegel::random_riemann_matrix;
use schottky_core::{kp, trisecant};
use std::time::Instant;

fn main() {
    let tol = 1e-12;
    // g=4 kp floor
    for seed in [11u64, 12, 13] {
        let tau = random_riemann_matrix::<f64>(4, seed).unwrap();
        let samples = fundamental_domain_points::<f64>(4, 8 * 13, seed);
        let t0 = Instant::now();
        match kp::kp_fit(&tau, &samples, 16, seed, tol) {
            Ok(out) => println!("kp g=4 seed={seed}: residual {:.3e}  ({:.1?})", out.residual, t0.elapsed()),
            Err(e) => println!("kp g=4 seed={seed}: ERR {e} ({:.1?})", t0.elapsed()),
        }
    }
    // g=4 search floor
    for seed in [21u64] {
        let tau = random_riemann_matrix::<f64>(4, seed).unwrap();
        let t0 = Instant::now();
        match trisecant::degenerate_search_best_residual(&tau, seed, 24, tol) {
            Ok((cfg, r)) => println!("search g=4 seed={seed}: residual {r:.3e} cfg? {} ({:.1?})", cfg.is_some(), t0.elapsed()),
            Err(e) => println!("search g=4 seed={seed}: ERR {e} ({:.1?})", t0.elapsed()),
        }
    }
    // continuation on a fitted g=2 config
    let tau = random_riemann_matrix::<f64>(2, 301).unwrap();
    let samples = fundamental_domain_points::<f64>(2, 48, 301);
    let (cfg, r) = trisecant::degenerate_search(&tau, 301, 16, tol).unwrap();
    println!("g=2 search residual {r:.3e}, |d1| {:.3e}, pm_dist(u,v) {:.3}", cfg.d1.norm(),
        cfg.v.canonical_distance(&cfg.u).min(cfg.v.canonical_distance(&(-&cfg.u))));
    let t0 = Instant::now();
    match trisecant::extend_to_order(&cfg, 3, &tau, &samples, tol) {
        Ok(cont) => println!("continuation residuals {:?} ({:.1?})", cont.order_residuals, t0.elapsed()),
        Err(e) => println!("continuation ERR {e} ({:.1?})", t0.elapsed()),
    }
}
